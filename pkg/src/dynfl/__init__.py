"""Fully dynamic facility location with bounded recourse."""

from .baselines import nearest_facility, static_greedy
from .cluster import CRITICAL, SATELLITE, Cluster
from .detector import BlockingDetector, BucketMatrix
from .engine import ClusteringState, RecourseLedger
from .errors import (AuditFailure, DuplicateInsertError, DynFLError, InputError,
                     InternalInconsistency, UnknownIdError)
from .estimator import DynamicFacilityLocation, GreedyFacilityLocation, NearestFacilityLocation
from .instance import LevelGeometry, MetricInstance
from .verification import audit, build_dual, check_certificate, detector_equivalence, exact_opt

__all__ = [
    "AuditFailure", "BlockingDetector", "BucketMatrix", "CRITICAL", "Cluster",
    "ClusteringState", "DuplicateInsertError", "DynFLError", "DynamicFacilityLocation",
    "GreedyFacilityLocation", "InputError", "InternalInconsistency", "LevelGeometry",
    "MetricInstance", "NearestFacilityLocation", "RecourseLedger", "SATELLITE",
    "UnknownIdError", "audit", "build_dual", "check_certificate", "detector_equivalence",
    "exact_opt", "nearest_facility", "static_greedy",
]
