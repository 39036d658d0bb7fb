"""Arrival of the escaped wave at distant detectors and the tunneling times."""

from tunneldecay.cli import SimConfig, run_experiment

# default probe at X = 120; the report summarizes the first detector
config = SimConfig(name="detectors", edge_traces=False)
art = run_experiment(config)
print(art.report.to_text())
