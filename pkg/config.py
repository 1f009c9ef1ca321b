import os
import logging

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict

# -------------------- LOAD ENVIRONMENT --------------------
load_dotenv()

LOG_LEVEL = os.getenv("RADLAB_LOG_LEVEL", "INFO")
DEFAULT_THREADS = int(os.getenv("RADLAB_THREADS", 1))
DEFAULT_OUT = os.getenv("RADLAB_OUT", "runs")
DATABASE_URL = os.getenv("RADLAB_DATABASE_URL")
DIVERGENCE_THRESHOLD = float(os.getenv("RADLAB_DIVERGENCE_THRESHOLD", 1e8))

SUMMARY_SCHEMA_VERSION = "1"
CODE_VERSION = "0.3.0"


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(
        level=(level or LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


# -------------------- TOLERANCES --------------------
class Tolerances(BaseModel):
    """Slack used by every verdict. One table, overridable per scenario."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    flux_bound: float = 1e-3            # flux_total <= E (1 + .)
    flux_residual: float = 1e-2         # |delta - surface| / E
    morawetz: float = 1e-3              # windowed sum <= 2E (1 + .)
    radiation_bound: float = 1e-3       # ||g||^2 <= E/c_d (1 + .)
    energy_gap: float = 1e-3            # E - c_d ||g||^2 >= -. E
    monotonicity: float = 1e-6          # cone increments >= -. E
    energy_distribution: float = 1e-2   # lhs <= rhs + . E
    energy_drift: float = 1e-3          # |E(t) - E(0)| / E(0)
    liminf_threshold: float = 0.05      # min over last third / initial
    exterior_decay: float = 0.1         # final / value at early time
    exterior_slack: float = 1e-3        # eventual monotonicity slack (x E)
    full_deficit: float = 0.15
    gap_fraction: float = 0.05          # (E - c_d||g||^2) / E
    pointwise: float = 1e-3
    round_trip: float = 0.05
    isometry: float = 0.02
    middle_band: float = 0.05
    decay_r2: float = 0.8               # goodness of the interior decay fit


DEFAULT_TOLERANCES = Tolerances()
