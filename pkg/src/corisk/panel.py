"""Returns panels: loading, indexing, and rolling / cross-sectional estimation.

A panel is a long table of (date, entity, ret, mv) records — daily simple
returns and market values.  Losses are the negated returns; the negation
happens here, at the estimation boundary, so everything upstream stays in
return space.  On top of the panel sit three consumers:

* a value-weighted system loss index,
* rolling-window co-risk estimates of a target entity against others,
* the full ordered-pair network grid of co-risk measures.

Pairs with fewer aligned observations than the configured floor are never
estimated silently; they are counted and reported.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import CoriskError, InsufficientDataError, PanelFormatError
from .measures import RiskLevelPair, estimate_from_losses

__all__ = [
    "MIN_SAMPLE_FLOOR",
    "PanelRecord",
    "RowIssue",
    "ReturnsPanel",
    "RollingConfig",
    "NetworkGrid",
    "load_panel",
    "system_loss_index",
    "weekly_aggregate",
    "rolling_estimate",
    "network_grid",
]

# Below this many paired observations, tail estimates at the default levels
# are not considered meaningful.  Callers may lower it, but get a warning.
MIN_SAMPLE_FLOOR = 2000

_REQUIRED_COLUMNS = ("date", "entity", "ret", "mv")
_MEASURE_KEYS = ("omega", "dcov", "dcoes", "ratio", "xi_hat")


@dataclass(frozen=True)
class PanelRecord:
    """One validated panel row."""

    date: dt.date
    entity: str
    ret: float
    mv: float


@dataclass(frozen=True)
class RowIssue:
    """A rejected input row: where it was and why it was dropped."""

    line: int
    reason: str
    raw: str


@dataclass(frozen=True, eq=False)
class ReturnsPanel:
    """Validated panel plus the diagnostics of everything that was dropped."""

    frame: pd.DataFrame
    rejects: tuple[RowIssue, ...] = ()

    @property
    def entities(self) -> tuple[str, ...]:
        if self.frame.empty:
            return ()
        return tuple(sorted(self.frame["entity"].unique()))

    @property
    def n_records(self) -> int:
        return len(self.frame)

    def returns(self, entity: str) -> pd.Series:
        sub = self.frame[self.frame["entity"] == entity]
        if sub.empty:
            raise KeyError(f"entity {entity!r} not present in the panel")
        return pd.Series(
            sub["ret"].to_numpy(), index=sub["date"].to_numpy(), name=entity
        )

    def losses(self, entity: str) -> pd.Series:
        """Losses are negated returns; the sign flip lives here only."""
        return -self.returns(entity)


def load_panel(source, *, delimiter: str = ",", strict: bool = False) -> ReturnsPanel:
    """Parse a delimited (date, entity, ret, mv) stream into a panel.

    ``source`` is a path or an open text stream.  The header must contain
    the four required column names (extras are ignored).  Malformed rows —
    bad dates, non-numeric fields, returns at or below -100%, negative
    market values, duplicate (date, entity) keys — are dropped and recorded
    with their line numbers; ``strict=True`` turns any rejection into
    :class:`PanelFormatError`.  A header with no data rows is a valid empty
    panel.
    """
    if hasattr(source, "read"):
        return _parse_panel(source, delimiter, strict)
    with open(source, newline="", encoding="utf-8") as fh:
        return _parse_panel(fh, delimiter, strict)


def _parse_panel(fh, delimiter: str, strict: bool) -> ReturnsPanel:
    reader = csv.reader(fh, delimiter=delimiter)
    header = next(reader, None)
    if header is None:
        raise PanelFormatError("input is empty: no header row")
    names = [h.strip().lower() for h in header]
    missing = [c for c in _REQUIRED_COLUMNS if c not in names]
    if missing:
        raise PanelFormatError(f"header is missing required columns: {missing}")
    pos = {c: names.index(c) for c in _REQUIRED_COLUMNS}
    width = max(pos.values()) + 1

    records: list[PanelRecord] = []
    rejects: list[RowIssue] = []
    seen: dict[tuple[dt.date, str], int] = {}

    def reject(line: int, reason: str, fields: list[str]) -> None:
        rejects.append(RowIssue(line, reason, delimiter.join(fields)))

    for fields in reader:
        line = reader.line_num
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) < width:
            reject(line, f"expected at least {width} fields, got {len(fields)}", fields)
            continue
        raw_date = fields[pos["date"]].strip()
        try:
            date = dt.date.fromisoformat(raw_date)
        except ValueError:
            reject(line, f"unparseable date {raw_date!r}", fields)
            continue
        entity = fields[pos["entity"]].strip()
        if not entity:
            reject(line, "empty entity", fields)
            continue
        try:
            ret = float(fields[pos["ret"]])
            mv = float(fields[pos["mv"]])
        except ValueError:
            reject(line, "non-numeric ret or mv", fields)
            continue
        if not (math.isfinite(ret) and math.isfinite(mv)):
            reject(line, "non-finite ret or mv", fields)
            continue
        if ret <= -1.0:
            reject(line, f"return {ret} is at or below -100%", fields)
            continue
        if mv < 0.0:
            reject(line, f"negative market value {mv}", fields)
            continue
        key = (date, entity)
        if key in seen:
            reject(line, f"duplicate of line {seen[key]}", fields)
            continue
        seen[key] = line
        records.append(PanelRecord(date, entity, ret, mv))

    if strict and rejects:
        preview = "; ".join(
            f"line {r.line}: {r.reason}" for r in rejects[:5]
        )
        more = "" if len(rejects) <= 5 else f" (+{len(rejects) - 5} more)"
        raise PanelFormatError(f"{len(rejects)} bad rows: {preview}{more}")

    frame = pd.DataFrame(
        [(r.date, r.entity, r.ret, r.mv) for r in records],
        columns=list(_REQUIRED_COLUMNS),
    )
    if not frame.empty:
        frame = frame.sort_values(["date", "entity"], kind="stable").reset_index(
            drop=True
        )
    return ReturnsPanel(frame=frame, rejects=tuple(rejects))


def system_loss_index(panel: ReturnsPanel, exclude=()) -> pd.Series:
    """Value-weighted system loss per date, optionally excluding entities.

    loss_t = - sum_i mv_it ret_it / sum_i mv_it over the included entities
    present on date t.  A date whose included market value does not sum to
    something positive is an error (weights would be undefined), named in
    the message.
    """
    excluded = set(exclude)
    df = panel.frame[~panel.frame["entity"].isin(excluded)]
    if df.empty:
        return pd.Series(dtype=float, name="loss")
    mv_total = df.groupby("date")["mv"].sum()
    bad = mv_total[~(mv_total > 0.0)]
    if len(bad):
        raise ValueError(
            f"total market value is not positive on {bad.index[0]}"
        )
    weighted = (df["ret"] * df["mv"]).groupby(df["date"]).sum()
    out = -(weighted / mv_total)
    out.name = "loss"
    return out.sort_index()


def weekly_aggregate(daily):
    """Compound non-overlapping blocks of five daily returns into weekly ones.

    Accepts an array or a Series (the Series keeps each block's last date
    as its index).  A trailing partial week is dropped.
    """
    values = np.asarray(
        daily.to_numpy() if isinstance(daily, pd.Series) else daily, dtype=float
    )
    if values.ndim != 1:
        raise ValueError("daily returns must be 1-D")
    if np.any(values <= -1.0) or not np.all(np.isfinite(values)):
        raise ValueError("daily returns must be finite and above -100%")
    weeks = values.size // 5
    compounded = np.prod(1.0 + values[: 5 * weeks].reshape(weeks, 5), axis=1) - 1.0
    if isinstance(daily, pd.Series):
        return pd.Series(compounded, index=daily.index[4::5][:weeks], name=daily.name)
    return compounded


@dataclass(frozen=True)
class RollingConfig:
    """Rolling-window estimation plan for one target entity.

    ``y`` is the target (e.g. the system index), ``x`` the conditioning
    entities.  Windows hold the most recent ``window`` aligned pairs at or
    before each evaluation date; pairs with fewer than ``min_obs`` aligned
    observations are counted as dropped rather than estimated.
    """

    y: str
    x: tuple[str, ...]
    window: int = 2000
    levels: RiskLevelPair = field(default_factory=lambda: RiskLevelPair(0.95, 0.95))
    start: dt.date | None = None
    end: dt.date | None = None
    min_obs: int = MIN_SAMPLE_FLOOR

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", tuple(self.x))
        if not self.x:
            raise ValueError("need at least one conditioning entity")
        if self.y in self.x:
            raise ValueError(f"target {self.y!r} cannot also be a conditioning entity")
        if len(set(self.x)) != len(self.x):
            raise ValueError("conditioning entities must be unique")
        if self.min_obs < 10:
            raise ValueError("min_obs below 10 is not meaningful")
        if self.window < self.min_obs:
            raise ValueError(
                f"window {self.window} is below the sample floor {self.min_obs}"
            )
        if self.min_obs < MIN_SAMPLE_FLOOR:
            warnings.warn(
                f"sample floor lowered to {self.min_obs} (< {MIN_SAMPLE_FLOOR}); "
                "tail estimates this short are noisy",
                stacklevel=2,
            )
        if self.start is not None and self.end is not None and self.start > self.end:
            raise ValueError("start date is after end date")


def _pair_task(task):
    key, x_arr, y_arr, levels = task
    try:
        est = estimate_from_losses(x_arr, y_arr, levels)
    except (CoriskError, ValueError) as exc:
        return key, None, f"{type(exc).__name__}: {exc}"
    return (
        key,
        {
            "n_used": x_arr.size,
            "omega": est.omega,
            "covar": est.covar,
            "coes": est.coes,
            "dcov": est.dcov,
            "dcoes": est.dcoes,
            "ratio": est.ratio if est.ratio is not None else np.nan,
            "xi_hat": est.xi_hat if est.xi_hat is not None else np.nan,
        },
        None,
    )


def _run_tasks(tasks, jobs: int):
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    if jobs == 1 or len(tasks) <= 1:
        return [_pair_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_pair_task, tasks))


def rolling_estimate(
    cfg: RollingConfig, panel: ReturnsPanel, jobs: int = 1, per_pair: bool = False
) -> pd.DataFrame:
    """Rolling co-risk estimates of ``cfg.y`` conditioned on each ``cfg.x``.

    For every evaluation date (dates where the target trades, inside
    [start, end]) and every conditioning entity, the most recent ``window``
    aligned (x, y) loss pairs at or before that date are estimated; only
    dates with at least one estimable pair appear.  Returns per-date
    averages across entities, or the long per-pair frame with
    ``per_pair=True``.
    """
    y_loss = panel.losses(cfg.y).sort_index()
    x_losses = {}
    for entity in cfg.x:
        x_losses[entity] = panel.losses(entity).sort_index()

    eval_dates = y_loss.index
    if cfg.start is not None:
        eval_dates = eval_dates[eval_dates >= cfg.start]
    if cfg.end is not None:
        eval_dates = eval_dates[eval_dates <= cfg.end]

    tasks = []
    dropped: dict[object, int] = {d: 0 for d in eval_dates}
    for entity, series in x_losses.items():
        common = series.index.intersection(y_loss.index)
        xc = series.loc[common].to_numpy()
        yc = y_loss.loc[common].to_numpy()
        for date in eval_dates:
            hi = int(np.searchsorted(common, date, side="right"))
            lo = max(0, hi - cfg.window)
            if hi - lo < cfg.min_obs:
                dropped[date] += 1
                continue
            tasks.append(((date, entity), xc[lo:hi], yc[lo:hi], cfg.levels))

    results = _run_tasks(tasks, jobs)
    records = []
    for (date, entity), row, err in results:
        if err is not None:
            dropped[date] += 1
            continue
        records.append({"date": date, "x": entity, **row})
    long = pd.DataFrame.from_records(records)
    if per_pair or long.empty:
        return long
    grouped = long.groupby("date")
    out = grouped[["omega", "dcov", "dcoes", "ratio", "xi_hat"]].mean()
    out.insert(0, "pairs_used", grouped.size())
    out.insert(1, "pairs_dropped", [dropped[d] for d in out.index])
    return out.reset_index()


@dataclass(frozen=True, eq=False)
class NetworkGrid:
    """Ordered-pair co-risk matrices over a roster of entities.

    ``matrices`` maps each measure name to a square frame whose rows are
    the conditioning entity X and whose columns are the target Y; skipped
    pairs (too little aligned history) stay NaN and are listed with their
    observation counts.
    """

    matrices: dict[str, pd.DataFrame]
    skipped: tuple[tuple[str, str, int], ...]
    levels: RiskLevelPair

    @property
    def roster(self) -> tuple[str, ...]:
        return tuple(self.matrices["omega"].index)

    def to_csv(self, prefix: str) -> list[str]:
        paths = []
        for key, frame in self.matrices.items():
            path = f"{prefix}_{key}.csv"
            frame.to_csv(path, index_label="x", float_format="%.7g")
            paths.append(path)
        skip_path = f"{prefix}_skipped.csv"
        pd.DataFrame(
            list(self.skipped), columns=["x", "y", "n_obs"]
        ).to_csv(skip_path, index=False)
        paths.append(skip_path)
        return paths


def network_grid(
    panel: ReturnsPanel,
    levels: RiskLevelPair,
    roster=None,
    *,
    min_obs: int = MIN_SAMPLE_FLOOR,
    jobs: int = 1,
) -> NetworkGrid:
    """Estimate every ordered pair (X -> Y) of the roster on full history.

    Each pair uses all dates where both entities trade.  Pairs with fewer
    than ``min_obs`` aligned observations, or whose solve fails, are
    flagged in ``skipped`` instead of silently fabricated.
    """
    names = tuple(roster) if roster is not None else panel.entities
    if len(names) < 2:
        raise ValueError("a network needs at least two entities")
    if len(set(names)) != len(names):
        raise ValueError("roster entries must be unique")
    if min_obs < MIN_SAMPLE_FLOOR:
        warnings.warn(
            f"sample floor lowered to {min_obs} (< {MIN_SAMPLE_FLOOR}); "
            "tail estimates this short are noisy",
            stacklevel=2,
        )
    losses = {e: panel.losses(e).sort_index() for e in names}

    tasks = []
    skipped: list[tuple[str, str, int]] = []
    for x_ent in names:
        for y_ent in names:
            if x_ent == y_ent:
                continue
            common = losses[x_ent].index.intersection(losses[y_ent].index)
            n = len(common)
            if n < min_obs:
                skipped.append((x_ent, y_ent, n))
                continue
            tasks.append(
                (
                    (x_ent, y_ent),
                    losses[x_ent].loc[common].to_numpy(),
                    losses[y_ent].loc[common].to_numpy(),
                    levels,
                )
            )

    results = _run_tasks(tasks, jobs)
    matrices = {
        key: pd.DataFrame(np.nan, index=list(names), columns=list(names))
        for key in _MEASURE_KEYS
    }
    for (x_ent, y_ent), row, err in results:
        if err is not None:
            skipped.append((x_ent, y_ent, -1))
            continue
        for key in _MEASURE_KEYS:
            matrices[key].loc[x_ent, y_ent] = row[key]
    return NetworkGrid(
        matrices=matrices, skipped=tuple(skipped), levels=levels
    )
