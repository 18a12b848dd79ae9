from enum import auto, Enum

class TailKind(Enum):
	TRUNCATE = auto()
	POWER_CONTINUATION = auto()
	EXPONENTIAL_DAMPING = auto()

class MomentKind(Enum):
	F0 = "f0"
	FR0 = "fr0"
	GRADF0 = "gradf0"
	GRADFR0 = "gradfr0"

class EquationKind(Enum):
	LINEAR = "linear"
	BELLMAN_MAX = "bellman_max"
	BELLMAN_MIN = "bellman_min"
	ISAACS = "isaacs"
	EXTREMAL_PLUS = "extremal_plus"
	EXTREMAL_MINUS = "extremal_minus"
	MIDPOINT = "midpoint"

class ReportFormat(Enum):
	JSON = "json"
	CSV = "csv"
