"""Experiment driver: epsilon sweeps across predictor, secular, and oracle lanes.

A sweep walks a descending list of couplings; for each it evaluates the
closed-form leading asymptotics, the secular pole (regular scenario), and a
grid-extrapolated oracle binding, then writes one CSV row per coupling and a
JSON report with fitted log-log slopes and pass/fail verdicts against the
configured tolerances.  Everything is deterministic: re-running a config
reproduces the artifacts byte for byte.  A failed sub-solver aborts only its
row, which keeps an error marker instead of fabricated numbers.

Oracle extrapolation per coupling: bindings are computed on the configured
step plan at each truncation length (Richardson in the steps, directionally
when ``h_trans`` is refined separately), then Aitken-extrapolated across the
lengths.  Wall features snap the step so the feature edge is exact on every
grid, keeping the step error a clean second-order term.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cell import explicit_window_solution_2d
from .modesum import BoxRegion, ModeSumKernel
from .oracle import (
    TruncatedGuide,
    aitken_limit,
    build_fd_operator,
    lowest_eigenpairs,
    richardson,
)
from .regular_pole import (
    PerturbationField,
    regular_leading_asymptotic,
    solve_secular,
)
from .singular_asym import (
    DIRICHLET_PATCH,
    NEUMANN_WINDOW,
    WindowSpec,
    dirichlet_window_pole,
    neumann_patch_pole,
)
from .transverse import CrossSection, TransverseBasis, build_basis

logger = logging.getLogger(__name__)

REGULAR_POTENTIAL = "RegularPotential"
DIRICHLET_WINDOW = "DirichletWindow"
NEUMANN_PATCH = "NeumannPatch"
SCENARIOS = (REGULAR_POTENTIAL, DIRICHLET_WINDOW, NEUMANN_PATCH)

CSV_HEADER = "epsilon,k_re,k_im,lambda_pred,lambda_pole,b_oracle,rel_err,classification"

# slope fits need this many couplings; the config invariant enforces it
MIN_EPSILONS = 4


class ConfigError(ValueError):
    """Experiment configuration is malformed or inconsistent."""


class FitError(RuntimeError):
    """Points cannot support a log-log slope fit (too few, or mixed signs)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated sweep description; see :func:`parse_config` for the schema."""

    scenario: str
    cross_section: CrossSection
    m: int
    epsilons: tuple[float, ...]
    perturbation: dict
    oracle: dict
    tolerances: dict
    raw: dict = field(repr=False)

    def lengths_for(self, index: int) -> tuple[float, ...]:
        """Truncation lengths for the ``index``-th coupling."""
        L = self.oracle["L"]
        if L and isinstance(L[0], (list, tuple)):
            return tuple(float(v) for v in L[index])
        return tuple(float(v) for v in L)


def parse_config(source) -> ExperimentConfig:
    """Build a validated config from a dict, JSON text, or JSON file path.

    Schema::

        {scenario, cross_section: {width, bc}, m, epsilons: [],
         perturbation: {...}, oracle: {h: [], L: []}, tolerances: {...}}

    ``epsilons`` must be strictly descending positive with at least four
    entries.  ``oracle.L`` is either one list of lengths shared by every
    coupling or one list per coupling; ``oracle.h`` lists longitudinal steps
    in decreasing order, with optional ``h_trans`` refined separately.
    """
    if isinstance(source, dict):
        raw = source
    else:
        text = str(source)
        if not text.lstrip().startswith(("{", "[")):
            p = Path(text)
            if not p.exists():
                raise ConfigError(f"config file not found: {source}")
            text = p.read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")

    missing = {"scenario", "cross_section", "m", "epsilons", "oracle"} - raw.keys()
    if missing:
        raise ConfigError(f"config missing required keys: {sorted(missing)}")
    scenario = raw["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")

    cs_raw = raw["cross_section"]
    try:
        cross_section = CrossSection(
            width=float(cs_raw["width"]), bc=str(cs_raw["bc"])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad cross_section {cs_raw!r}: {exc}") from exc

    m = raw["m"]
    if not isinstance(m, int) or m < 1:
        raise ConfigError(f"m must be a positive integer, got {m!r}")

    eps = [float(e) for e in raw["epsilons"]]
    if len(eps) < MIN_EPSILONS:
        raise ConfigError(
            f"need at least {MIN_EPSILONS} couplings for slope fits, got {len(eps)}"
        )
    if any(e <= 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
        raise ConfigError(f"epsilons must be strictly descending positive: {eps}")

    oracle = dict(raw["oracle"])
    hs = [float(h) for h in oracle.get("h", [])]
    if not hs or any(h <= 0 for h in hs):
        raise ConfigError(f"oracle.h must list positive steps, got {oracle.get('h')}")
    if any(a <= b for a, b in zip(hs, hs[1:])):
        raise ConfigError(f"oracle.h must be strictly decreasing: {hs}")
    oracle["h"] = hs
    if "h_trans" in oracle:
        gts = [float(g) for g in oracle["h_trans"]]
        if not gts or any(g <= 0 for g in gts) or any(
            a <= b for a, b in zip(gts, gts[1:])
        ):
            raise ConfigError(f"oracle.h_trans must be strictly decreasing positive: {gts}")
        oracle["h_trans"] = gts
    L = oracle.get("L")
    if not L:
        raise ConfigError("oracle.L must list truncation lengths")
    if isinstance(L[0], (list, tuple)):
        if len(L) != len(eps):
            raise ConfigError(
                f"per-coupling oracle.L needs {len(eps)} lists, got {len(L)}"
            )
        for sub in L:
            if not sub or any(float(v) <= 0 for v in sub):
                raise ConfigError(f"bad length list {sub!r}")
    elif any(float(v) <= 0 for v in L):
        raise ConfigError(f"lengths must be positive, got {L}")
    ends = oracle.get("ends", "dirichlet-ends")
    if ends not in ("dirichlet-ends", "neumann-ends"):
        raise ConfigError(f"oracle.ends must be dirichlet-ends or neumann-ends, got {ends!r}")
    order = oracle.get("order", 2)
    if not (float(order) > 0):
        raise ConfigError(f"oracle.order must be positive, got {order!r}")
    extrap = oracle.get("extrapolation", "richardson")
    if extrap not in ("richardson", "aitken"):
        raise ConfigError(
            f"oracle.extrapolation must be richardson or aitken, got {extrap!r}"
        )

    perturbation = dict(raw.get("perturbation", {}))
    if scenario == REGULAR_POTENTIAL:
        kind = perturbation.setdefault("kind", "box")
        if kind != "box":
            raise ConfigError(f"only the box potential is packaged, got kind {kind!r}")
        perturbation.setdefault("amplitude", 1.0)
        perturbation.setdefault("half_width", 1.0)
    else:
        a = perturbation.get("half_width")
        if a is None or float(a) <= 0:
            raise ConfigError(
                f"{scenario} needs a positive perturbation.half_width, got {a!r}"
            )
    expected_bc = "neumann" if scenario == NEUMANN_PATCH else "dirichlet"
    if scenario != REGULAR_POTENTIAL and cross_section.bc != expected_bc:
        raise ConfigError(
            f"{scenario} requires a {expected_bc} cross section, got {cross_section.bc}"
        )

    return ExperimentConfig(
        scenario=scenario,
        cross_section=cross_section,
        m=m,
        epsilons=tuple(eps),
        perturbation=perturbation,
        oracle=oracle,
        tolerances=dict(raw.get("tolerances", {})),
        raw=raw,
    )


@dataclass
class SweepRow:
    """One coupling's worth of sweep output; ``None`` renders as an empty cell."""

    epsilon: float
    k_re: float | None = None
    k_im: float | None = None
    lam_pred: float | None = None
    lam_pole: float | None = None
    b_oracle: float | None = None
    rel_err: float | None = None
    classification: str | None = None
    error: str | None = None
    extras: dict = field(default_factory=dict)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return repr(float(value))


def render_csv(rows: list[SweepRow]) -> str:
    """Sweep rows as CSV text with the fixed header; deterministic."""
    lines = [CSV_HEADER]
    for r in rows:
        classification = r.classification
        if r.error is not None:
            classification = f"error:{r.error.split(':', 1)[0]}"
        lines.append(
            ",".join(
                (
                    _cell(r.epsilon),
                    _cell(r.k_re),
                    _cell(r.k_im),
                    _cell(r.lam_pred),
                    _cell(r.lam_pole),
                    _cell(r.b_oracle),
                    _cell(r.rel_err),
                    _cell(classification),
                )
            )
        )
    return "\n".join(lines) + "\n"


def _snap_to_feature(h: float, width: float) -> float:
    """Step with the feature edge exactly midway between boundary nodes.

    Clamped so the feature keeps at least the minimum node count; a step too
    coarse for a small window is refined rather than rejected, since a sweep
    shares one step plan across shrinking features.
    """
    n = max(4, round(width / h - 0.5))
    return width / (n + 0.5)


def _box_sampler(depth: float, a: float, step: float):
    # cell-average of the indicator well: half value on edge nodes, exact
    # overlap fraction for any alignment; keeps the step error second order
    def q(x1, x2):
        frac = np.clip((a - np.abs(x1)) / step + 0.5, 0.0, 1.0)
        return -depth * frac * np.ones_like(x2)

    return q


def truncated_binding(
    cfg: ExperimentConfig, eps: float, L: float, h: float, ht: float | None = None
) -> float:
    """Binding from one truncated-guide eigensolve; no extrapolation."""
    scenario = cfg.scenario
    common = dict(
        cross_section=cfg.cross_section,
        half_length=L,
        h=h,
        h_trans=h if ht is None else ht,
        ends=cfg.oracle.get("ends", "dirichlet-ends"),
        mode_index=cfg.m,
        symmetric_half=bool(cfg.oracle.get("symmetric_half", True)),
    )
    if scenario == DIRICHLET_WINDOW:
        common["window_half_width"] = eps * float(cfg.perturbation["half_width"])
    elif scenario == NEUMANN_PATCH:
        common["patch_half_width"] = eps * float(cfg.perturbation["half_width"])
    g = TruncatedGuide(**common)
    if scenario == REGULAR_POTENTIAL:
        depth = eps * float(cfg.perturbation["amplitude"])
        a = float(cfg.perturbation["half_width"])
        g = TruncatedGuide(
            **common, potential=_box_sampler(depth, a, g.step_long)
        )
    sol = lowest_eigenpairs(build_fd_operator(g))
    return sol.binding


def oracle_binding(cfg: ExperimentConfig, eps: float, L: float) -> float:
    """Step-extrapolated binding at one coupling and truncation length.

    Richardson across the step plan: isotropic when only ``h`` is listed,
    directional (independent longitudinal and transverse elimination from
    three solves) when ``h_trans`` refines separately.
    """
    hs = list(cfg.oracle["h"])
    if cfg.scenario in (DIRICHLET_WINDOW, NEUMANN_PATCH):
        W = eps * float(cfg.perturbation["half_width"])
        hs = [_snap_to_feature(h, W) for h in hs]
    gts = cfg.oracle.get("h_trans")
    if gts is None:
        bs = [truncated_binding(cfg, eps, L, h, h) for h in hs]
        if len(bs) == 1 or hs[-2] <= hs[-1]:
            # snapping can collapse two steps onto the same grid
            return bs[-1]
        if cfg.oracle.get("extrapolation", "richardson") == "aitken" and len(bs) >= 3:
            return aitken_limit(bs)
        order = float(cfg.oracle.get("order", 2))
        return richardson(bs[-2], bs[-1], hs[-2] / hs[-1], order=order)
    b00 = truncated_binding(cfg, eps, L, hs[0], gts[0])
    if len(hs) < 2 and len(gts) < 2:
        return b00
    out = b00
    if len(hs) >= 2 and hs[0] > hs[1]:
        b10 = truncated_binding(cfg, eps, L, hs[1], gts[0])
        r1 = hs[0] / hs[1]
        out -= (b00 - b10) * r1 * r1 / (r1 * r1 - 1.0)
    if len(gts) >= 2:
        b01 = truncated_binding(cfg, eps, L, hs[0], gts[1])
        r2 = gts[0] / gts[1]
        out -= (b00 - b01) * r2 * r2 / (r2 * r2 - 1.0)
    return out


def _extrapolated_binding(cfg: ExperimentConfig, index: int) -> tuple[float, dict]:
    eps = cfg.epsilons[index]
    Ls = cfg.lengths_for(index)
    by_L = [oracle_binding(cfg, eps, L) for L in Ls]
    extras = {"L": list(Ls), "b_by_L": by_L}
    if cfg.scenario == NEUMANN_PATCH or len(by_L) < 3:
        # no positive limit exists for the patch; report the best (largest-L)
        # truncated value instead of extrapolating toward one
        return by_L[-1], extras
    return aitken_limit(by_L), extras


def regular_inputs(
    cfg: ExperimentConfig, basis: TransverseBasis
) -> tuple[ModeSumKernel, PerturbationField]:
    """Secular-lane kernel and potential for a regular-potential config."""
    p = cfg.perturbation
    region = BoxRegion(
        cross_section=cfg.cross_section,
        half_length=float(p["half_width"]),
        n_long=int(p.get("n_long", 129)),
        n_trans=int(p.get("n_trans", 17)),
    )
    count = int(p.get("modes", cfg.m + 3))
    kernel = ModeSumKernel(basis=basis, m=cfg.m, region=region, count=count)
    amp = float(p["amplitude"])
    V = PerturbationField.from_function(
        region, lambda x1, x2: amp * np.ones_like(x1) * np.ones_like(x2)
    )
    return kernel, V


def predict_row(cfg: ExperimentConfig, eps: float, basis: TransverseBasis) -> SweepRow:
    """Leading-order prediction for one coupling; no secular or oracle lane."""
    if cfg.scenario == REGULAR_POTENTIAL:
        _, V = regular_inputs(cfg, basis)
        lam = regular_leading_asymptotic(V, eps, cfg.m, basis).real
        lead = math.sqrt(abs(lam)) / eps
        return SweepRow(
            epsilon=eps,
            k_re=lead * eps,
            k_im=0.0,
            lam_pred=lam,
            extras={"first_order_coefficient": lead},
        )
    a = float(cfg.perturbation["half_width"])
    if cfg.scenario == DIRICHLET_WINDOW:
        spec = WindowSpec(dimension=2, half_width=a, eps=eps, kind=NEUMANN_WINDOW)
        c2 = explicit_window_solution_2d(a).farfield_constant
        pole = dirichlet_window_pole(
            spec, c2, basis.wall_slope[cfg.m - 1], cfg.m, basis=basis
        )
    else:
        spec = WindowSpec(dimension=2, half_width=a, eps=eps, kind=DIRICHLET_PATCH)
        pole = neumann_patch_pole(spec, basis, cfg.m)
    return SweepRow(
        epsilon=eps,
        k_re=pole.k_lead,
        k_im=pole.im_k_lead,
        lam_pred=pole.lam_lead,
        classification=pole.classification,
        extras={"tau": pole.tau, "order": pole.order},
    )


def _regular_row(cfg: ExperimentConfig, index: int, basis: TransverseBasis) -> SweepRow:
    eps = cfg.epsilons[index]
    row = predict_row(cfg, eps, basis)
    kernel, V = regular_inputs(cfg, basis)
    pole = solve_secular(V, eps, kernel)
    b, oracle_extras = _extrapolated_binding(cfg, index)
    row.extras.update(oracle_extras)
    row.k_re, row.k_im = pole.k.real, pole.k.imag
    row.lam_pole = pole.lam.real
    row.classification = pole.classification
    row.b_oracle = b
    row.rel_err = abs(row.lam_pred + b) / abs(b) if b > 0 else None
    return row


def _window_row(cfg: ExperimentConfig, index: int, basis: TransverseBasis) -> SweepRow:
    eps = cfg.epsilons[index]
    row = predict_row(cfg, eps, basis)
    b, oracle_extras = _extrapolated_binding(cfg, index)
    row.extras.update(oracle_extras)
    row.b_oracle = b
    row.rel_err = abs(row.lam_pred + b) / abs(b) if b > 0 else None
    return row


def _patch_row(cfg: ExperimentConfig, index: int, basis: TransverseBasis) -> SweepRow:
    eps = cfg.epsilons[index]
    row = predict_row(cfg, eps, basis)
    b, oracle_extras = _extrapolated_binding(cfg, index)
    row.extras.update(oracle_extras)
    row.b_oracle = b
    return row


_ROW_RUNNERS = {
    REGULAR_POTENTIAL: _regular_row,
    DIRICHLET_WINDOW: _window_row,
    NEUMANN_PATCH: _patch_row,
}


def run_sweep(
    cfg: ExperimentConfig, csv_path=None, threads: int = 1
) -> list[SweepRow]:
    """One row per coupling, descending; optionally writes the CSV artifact.

    Rows are computed independently (in a thread pool when ``threads > 1``)
    and assembled in config order.  A sub-solver failure marks its row with
    the error instead of aborting the sweep.
    """
    basis_count = max(cfg.m + 8, int(cfg.perturbation.get("modes", 0)))
    basis = build_basis(cfg.cross_section, basis_count)
    runner = _ROW_RUNNERS[cfg.scenario]

    def one(index: int) -> SweepRow:
        try:
            row = runner(cfg, index, basis)
        except Exception as exc:
            logger.warning("row eps=%g failed: %s", cfg.epsilons[index], exc)
            return SweepRow(
                epsilon=cfg.epsilons[index],
                error=f"{type(exc).__name__}: {exc}",
            )
        logger.info("row eps=%g done", row.epsilon)
        return row

    indices = range(len(cfg.epsilons))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, indices))
    else:
        rows = [one(i) for i in indices]
    if csv_path is not None:
        Path(csv_path).write_text(render_csv(rows))
    return rows


def fit_loglog_slope(points) -> tuple[float, float]:
    """Least-squares slope of ``log |value|`` against ``log eps``.

    Returns ``(slope, stderr)``.  Needs at least three points with values of
    one sign; a sign change means there is no power law to fit.
    """
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise FitError(f"need at least 3 points for a slope, got {len(pts)}")
    vals = np.array([v for _, v in pts])
    if np.any(vals == 0) or (np.any(vals > 0) and np.any(vals < 0)):
        raise FitError("values change sign (or vanish); no power law to fit")
    x = np.log([e for e, _ in pts])
    y = np.log(np.abs(vals))
    n = len(pts)
    xbar = x.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xbar)
    ss_res = float(np.sum((y - slope * x - intercept) ** 2))
    stderr = math.sqrt(max(ss_res, 0.0) / (n - 2) / sxx) if n > 2 else 0.0
    return slope, stderr


def compute_fits(cfg: ExperimentConfig, rows: list[SweepRow]) -> dict:
    """Slope and prefactor fits over the sweep rows; failures become notes."""
    fits: dict = {}

    def try_fit(name: str, pts) -> None:
        try:
            slope, stderr = fit_loglog_slope(pts)
        except FitError as exc:
            fits[name] = {"slope": None, "stderr": None, "note": str(exc)}
            return
        fits[name] = {"slope": slope, "stderr": stderr}

    ok = [r for r in rows if r.error is None]
    pred = [(r.epsilon, r.lam_pred) for r in ok if r.lam_pred is not None]
    if len(pred) >= 3:
        try_fit("pred_slope", pred)
    bind = [(r.epsilon, r.b_oracle) for r in ok if r.b_oracle is not None]
    if len(bind) >= 3:
        try_fit("b_slope", bind)
    gap = [
        (r.epsilon, r.lam_pole - r.lam_pred)
        for r in ok
        if r.lam_pole is not None and r.lam_pred is not None
    ]
    if len(gap) >= 3:
        try_fit("gap_slope", gap)

    pf = cfg.tolerances.get("prefactor")
    if pf is not None and bind:
        p = float(pf["exponent"])
        vals = [b / e**p for e, b in bind if b > 0]
        if vals:
            fits["prefactor"] = {
                "exponent": p,
                "geometric_mean": math.exp(
                    sum(math.log(v) for v in vals) / len(vals)
                ),
                "predicted": float(pf.get("predicted", 0.0)),
            }
    return fits


def evaluate_checks(cfg: ExperimentConfig, rows: list[SweepRow], fits: dict) -> dict:
    """Verdicts against the declared tolerances; see the config schema.

    Recognized tolerance keys: ``rel_err`` (max, optional epsilon),
    ``slope`` (min/max on ``b_slope``), ``gap_slope_min``, ``prefactor``
    (exponent/predicted/rel_tol), ``classification`` (expected label on
    every row), ``truncation_bound`` (factor on the per-length bindings
    against the pure truncation scale), ``first_order`` (margin on
    ``|k - c eps|`` in units of ``eps^2``).
    """
    checks: list[dict] = []
    tol = cfg.tolerances

    def add(name: str, passed: bool, detail: str, row: int | None = None) -> None:
        entry = {"name": name, "pass": bool(passed), "detail": detail}
        if row is not None:
            entry["row"] = row
        checks.append(entry)

    for i, r in enumerate(rows):
        if r.error is not None:
            add("row_ok", False, r.error, row=i)

    spec = tol.get("rel_err")
    if spec is not None:
        target = spec.get("epsilon")
        limit = float(spec["max"])
        for i, r in enumerate(rows):
            if target is not None and r.epsilon != float(target):
                continue
            if r.error is not None:
                continue
            if r.rel_err is None:
                add("rel_err", False, "no oracle comparison available", row=i)
            else:
                add(
                    "rel_err",
                    r.rel_err <= limit,
                    f"rel_err {r.rel_err:.6g} vs limit {limit:g}",
                    row=i,
                )

    spec = tol.get("slope")
    if spec is not None:
        got = fits.get("b_slope", {}).get("slope")
        if got is None:
            add("slope", False, "binding slope unavailable")
        else:
            lo, hi = float(spec["min"]), float(spec["max"])
            add("slope", lo <= got <= hi, f"slope {got:.4f} vs [{lo:g}, {hi:g}]")

    if "gap_slope_min" in tol:
        got = fits.get("gap_slope", {}).get("slope")
        if got is None:
            add("gap_slope", False, "gap slope unavailable")
        else:
            lo = float(tol["gap_slope_min"])
            add("gap_slope", got >= lo, f"slope {got:.4f} vs minimum {lo:g}")

    spec = tol.get("prefactor")
    if spec is not None:
        fit = fits.get("prefactor")
        if fit is None:
            add("prefactor", False, "prefactor fit unavailable")
        else:
            rel = abs(fit["geometric_mean"] - fit["predicted"]) / abs(fit["predicted"])
            limit = float(spec.get("rel_tol", 0.15))
            add(
                "prefactor",
                rel <= limit,
                f"geometric mean {fit['geometric_mean']:.6g} vs predicted "
                f"{fit['predicted']:g} (rel dev {rel:.3f}, limit {limit:g})",
            )

    spec = tol.get("classification")
    if spec is not None:
        want = str(spec["expect"]) if isinstance(spec, dict) else str(spec)
        for i, r in enumerate(rows):
            if r.error is not None:
                continue
            add(
                "classification",
                r.classification == want,
                f"{r.classification!r} vs expected {want!r}",
                row=i,
            )

    spec = tol.get("truncation_bound")
    if spec is not None:
        factor = float(spec["factor"]) if isinstance(spec, dict) else float(spec)
        for i, r in enumerate(rows):
            if r.error is not None or "b_by_L" not in r.extras:
                continue
            for L, b in zip(r.extras["L"], r.extras["b_by_L"]):
                scale = factor * (math.pi / (2.0 * L)) ** 2
                add(
                    "truncation_bound",
                    b <= scale,
                    f"b(L={L:g}) = {b:.6g} vs {scale:.6g}",
                    row=i,
                )

    spec = tol.get("first_order")
    if spec is not None:
        margin = float(spec["margin_eps2"]) if isinstance(spec, dict) else float(spec)
        for i, r in enumerate(rows):
            if r.error is not None or r.k_re is None:
                continue
            c = r.extras.get("first_order_coefficient")
            if c is None:
                add("first_order", False, "no leading coefficient recorded", row=i)
                continue
            dev = abs(r.k_re - c * r.epsilon)
            limit = margin * r.epsilon**2
            add(
                "first_order",
                dev <= limit,
                f"|k - {c:.6g} eps| = {dev:.6g} vs {limit:.6g}",
                row=i,
            )

    return {"pass": all(c["pass"] for c in checks), "checks": checks}


def emit_report(
    cfg: ExperimentConfig, rows: list[SweepRow], fits: dict, path=None
) -> str:
    """Deterministic JSON report: config echo, rows, fits, check verdicts."""
    verdicts = evaluate_checks(cfg, rows, fits)
    doc = {
        "config": cfg.raw,
        "rows": [
            {
                "epsilon": r.epsilon,
                "k_re": r.k_re,
                "k_im": r.k_im,
                "lambda_pred": r.lam_pred,
                "lambda_pole": r.lam_pole,
                "b_oracle": r.b_oracle,
                "rel_err": r.rel_err,
                "classification": r.classification,
                "error": r.error,
                "extras": r.extras,
            }
            for r in rows
        ],
        "fits": fits,
        "pass": verdicts["pass"],
        "checks": verdicts["checks"],
    }
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def run_experiment(
    cfg: ExperimentConfig, out_dir=None, threads: int = 1
) -> tuple[list[SweepRow], dict, str]:
    """Sweep, fit, and report in one pass; writes artifacts under ``out_dir``."""
    csv_path = report_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "sweep.csv"
        report_path = out / "report.json"
    rows = run_sweep(cfg, csv_path=csv_path, threads=threads)
    fits = compute_fits(cfg, rows)
    report = emit_report(cfg, rows, fits, path=report_path)
    return rows, fits, report
