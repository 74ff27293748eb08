"""branchdrift: locate branching-frequency drifts at the decision places of
a Petri net by aligning an event log against the model, extracting one
categorical choice sequence per decision place, and segmenting it with
penalized change-point search."""

__version__ = "0.1.0"

from . import alignment, changepoint, choices, eventlog, petri, report, synth

__all__ = ["alignment", "changepoint", "choices", "eventlog", "petri",
           "report", "synth", "__version__"]
