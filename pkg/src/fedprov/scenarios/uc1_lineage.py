"""End-to-end lineage: dataset -> trained model -> published forecast image.

A producer publishes a measurement dataset; a second researcher trains a
model on it and renders forecast maps. The image's PID, cited in a paper,
must trace back through the model to the original measurements.
"""

from __future__ import annotations

import sys

from .common import ScenarioEnv, activity, agent, document, entity, relation, scenario_main

DATASET_CSV = "site,month,soil_moisture\nTN-01,2026-01,0.312\nTN-02,2026-01,0.287\n"
MODEL_BLOB = "model-weights: interpolation-v1 trained on TN sites\n"
IMAGE_BLOB = "rendered forecast map bytes (january, region TN)\n"


def run(config_path: str) -> dict:
    env = ScenarioEnv(config_path)
    env.ensure_user("OrgA", "alice")
    env.ensure_user("OrgB", "bob")

    dataset = env.publish(
        "alice",
        "uc1/dataset.csv",
        DATASET_CSV,
        document(
            entities=[entity("e-dataset", "soil moisture measurements")],
            activities=[activity("a-collect", "sensor field campaign")],
            relations=[
                relation("was-generated-by", "e-dataset", "a-collect"),
                relation("was-attributed-to", "e-dataset", "ag-alice"),
            ],
            agents=[agent("ag-alice", "alice", identity_ref="alice")],
        ),
    )

    model = env.publish(
        "bob",
        "uc1/model.bin",
        MODEL_BLOB,
        document(
            entities=[
                entity("e-dataset", "training dataset",
                       artifact_pid=dataset["artifact_pid"],
                       checksum=dataset["artifact_checksum"]),
                entity("e-model", "spatial interpolation model"),
            ],
            activities=[activity("a-train", "model training")],
            relations=[
                relation("used", "a-train", "e-dataset"),
                relation("was-generated-by", "e-model", "a-train"),
            ],
        ),
    )

    image = env.publish(
        "bob",
        "uc1/forecast.png",
        IMAGE_BLOB,
        document(
            entities=[
                entity("e-model", "trained model",
                       artifact_pid=model["artifact_pid"],
                       checksum=model["artifact_checksum"]),
                entity("e-image", "forecast map"),
            ],
            activities=[activity("a-render", "forecast rendering")],
            relations=[
                relation("used", "a-render", "e-model"),
                relation("was-generated-by", "e-image", "a-render"),
            ],
        ),
    )

    trace = env.trace(image["artifact_pid"])
    return {
        "dataset_pid": dataset["artifact_pid"],
        "model_pid": model["artifact_pid"],
        "image_pid": image["artifact_pid"],
        "prov_pids": {
            "dataset": dataset["prov_pid"],
            "model": model["prov_pid"],
            "image": image["prov_pid"],
        },
        "trace": trace,
    }


if __name__ == "__main__":
    sys.exit(scenario_main(run, __doc__.strip().splitlines()[0]))
