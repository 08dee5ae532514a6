import enum


class ReplicateStatus(enum.Enum):
    PENDING = "pending"
    PROCESSING = "processing"
    COMPLETED = "completed"
    FAILED = "failed"


class Experiment(enum.Enum):
    GAMMA_VARIATION = "gamma-variation"
    X_VARIATION = "x-variation"
    ESTIMATE_K = "estimate-k"
    VERIFY_LEMMAS = "verify-lemmas"
    LOCAL_TIME_MOMENTS = "local-time-moments"
    SELF_SIMILARITY = "self-similarity"


class GammaRoute(enum.Enum):
    DIRECT = "direct"
    CLARK_OCONE = "clark_ocone"


class KMethod(enum.Enum):
    R2_XY_QUAD = "R2_XYQuad"
    R2_EXP_KERNEL = "R2_ExpKernel"
    RW_OUTER_POWER = "RW_OuterPower"
    RW_INNER_POWER = "RW_InnerPower"


class Reading(enum.Enum):
    OUTER_POWER = "OuterPower"  # E|B_1|^{4/3} (E ∫ (L_1^z)^2 dz)^{2/3}
    INNER_POWER = "InnerPower"  # E|B_1|^{4/3} E[(∫ (L_1^z)^2 dz)^{2/3}]


class Normalization(enum.Enum):
    CALIBRATED = "calibrated"
    PRINTED = "printed"


class ConvergenceMode(enum.Enum):
    L1 = "L1"
    L2 = "L2"
