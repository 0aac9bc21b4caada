"""Drift fields, potentials and class-membership estimators."""
from heatlab.drift.spec import DriftSpec, PotentialSpec, read_binary, write_binary
from heatlab.drift.examples import BUILTINS, parse_drift
from heatlab.drift.families import TestFunctionFamily, default_family
from heatlab.drift.kato import KatoResult, kato_norm

__all__ = ["BUILTINS", "DriftSpec", "KatoResult", "PotentialSpec", "TestFunctionFamily",
           "default_family", "kato_norm", "parse_drift", "read_binary", "write_binary"]
