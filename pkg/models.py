import math

from sqlalchemy import Boolean, Column, DateTime, Float, Integer, String, Text
from sqlalchemy.sql import func

from database import Base


def _number(value):
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


# ------------------------------------
# SWEEP CELLS TABLE
# ------------------------------------
class SweepCell(Base):
    __tablename__ = "sweep_cells"

    id = Column(Integer, primary_key=True, autoincrement=True)
    sweep = Column(String(255), nullable=False)      # template scenario name
    cell = Column(Integer, nullable=False)

    # axis values; NULL when the axis is not swept
    d = Column(Integer, nullable=True)
    p = Column(Float, nullable=True)
    kappa = Column(Float, nullable=True)
    epsilon = Column(Float, nullable=True)
    h = Column(Float, nullable=True)

    status = Column(String(50), nullable=False, default="ok")
    error = Column(Text, nullable=True)
    passed = Column(Boolean, nullable=False, default=False)
    energy = Column(Float, nullable=True)
    max_drift = Column(Float, nullable=True)
    decay_exponent = Column(Float, nullable=True)
    failed_verdicts = Column(Text, nullable=True)

    created_at = Column(
        DateTime(timezone=True),
        default=func.now()
    )

    @classmethod
    def from_row(cls, sweep: str, row: dict) -> "SweepCell":
        d = row.get("d")
        return cls(
            sweep=sweep,
            cell=int(row["cell"]),
            d=None if d is None else int(d),
            p=_number(row.get("p")),
            kappa=_number(row.get("kappa")),
            epsilon=_number(row.get("epsilon")),
            h=_number(row.get("h")),
            status=row["status"],
            error=row.get("error") or None,
            passed=bool(row["passed"]),
            energy=_number(row.get("energy")),
            max_drift=_number(row.get("max_drift")),
            decay_exponent=_number(row.get("decay_exponent")),
            failed_verdicts=row.get("failed_verdicts") or None,
        )
