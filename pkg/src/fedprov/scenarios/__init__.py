"""Executable end-to-end scenario scripts.

Each module drives a running federation through one realistic workflow via
the same code paths as the command-line client, and returns a JSON-friendly
summary. They double as integration fixtures for the test suite and as
worked documentation:

* ``uc1_lineage``       publish dataset -> model -> forecast image, then trace
  the image back to the original measurements.
* ``uc2_cascade``       four linked experiments across organizations; retract
  one input file and flag everything derived from it.
* ``uc3_iterations``    successive model checkpoints, each derived from its
  predecessor, inspected as one iteration history.
* ``uc4_enrichment``    retroactively attach a late-published supplement's PID
  to an existing provenance record (a new, linked version).
* ``uc5_decomposition`` expand a black-box activity into sub-activities with
  intermediate artifacts, preserving the original record.

``runner.run_all`` replays all five against one federation and reports the
resulting PIDs and per-node state digests. Replays are byte-identical across
runs when ``FEDPROV_FROZEN_TIME`` pins the clock.
"""
