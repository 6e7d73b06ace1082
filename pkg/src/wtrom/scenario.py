"""Scenario files: a TOML document with unit-suffixed keys.

Every quantity carries its unit in the key name (``_pu``, ``_s``, ``_ohm``,
``_hz``, ``_radps``). A scenario is parsed into a plain nested dict with all
defaults filled in (kept on :attr:`Scenario.data` so sweeps can edit a field
by dotted path and rebuild), then into typed objects.

Minimal example::

    schema_version = 1
    name = "slg"

    [network.zg1]
    r_pu = 0.0037
    l_pu = 0.06

    [fault]
    kind = "SLG_A"
    zf_ohm = 6.02e-4
    t_on_s = 0.2
    t_clear_s = 0.7

    [fault.currents]
    id_pu = 0.0
    iq_pu = -0.625
    iq_neg_pu = 0.5
"""

from __future__ import annotations

import copy
import hashlib
import logging
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import seqnet
from .errors import ParseError, UnknownParameter, ValidationError
from .gridcode import CurrentRefs, GridCodeParams
from .refmodel import NotchFilterDesign
from .rom import PiecewiseLinearSignal, SolverConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# Section -> {key: default}. ``None`` marks an optional key without default.
_SCHEMA = {
    "": {"schema_version": SCHEMA_VERSION, "name": "unnamed", "seed": 0, "description": ""},
    "base": {"s_base_va": 12e6, "v_base_ll_v": 690.0, "f0_hz": 50.0},
    "pll": {
        "kp_radps_per_v": 0.025,
        "ki_radps2_per_v": 1.5,
        "notch_enabled": True,
        "notch_center_hz": None,
        "notch_zeta": 0.02,
        "cc_tau_s": 2e-3,
        "refmodel_method": "rk4",
    },
    "prefault": {"vg_pu": 1.0, "id_pu": 1.0, "iq_pu": -0.1, "iq_neg_pu": 0.0},
    "fault": {
        "kind": None,
        "zf_ohm": None,
        "zf_pu": None,
        "t_on_s": None,
        "t_clear_s": None,
        "retained_voltage_pu": 0.0,
    },
    "fault.currents": {"id_pu": None, "iq_pu": None, "iq_neg_pu": 0.0},
    "gridcode": {
        "k_pos": 2.0,
        "k_neg": 2.0,
        "deadband_pu": 0.0,
        "iq_total_max_pu": 1.0,
        "i_total_max_pu": 1.0,
        "tol_pu": 1e-9,
        "max_iter": 200,
    },
    "postfault": {"id_ramp_pu_per_s": 5.0},
    "grid_frequency": {"points_hz": None},
    "solver": {
        "t_end_s": 1.0,
        "dt_s": 50e-6,
        "output_dt_s": 100e-6,
        "diverge_threshold_radps": None,
        "rate_reset": True,
    },
}
_IMPEDANCE_KEYS = {"r_pu": 0.0, "l_pu": 0.0}
_OPTIONAL_SECTIONS = {"fault", "fault.currents", "gridcode"}


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    base: seqnet.BaseQuantities
    network: seqnet.SequenceImpedanceSet
    kp_per_v: float
    ki_per_v: float
    notch: NotchFilterDesign | None
    cc_tau: float
    refmodel_method: str
    vg: float
    prefault_refs: CurrentRefs
    fault: seqnet.FaultSpec | None
    retained_voltage: float
    fault_refs: CurrentRefs | None
    gridcode: GridCodeParams | None
    gridcode_tol: float
    gridcode_max_iter: int
    id_ramp: float
    grid_frequency: PiecewiseLinearSignal
    t_end: float
    solver: SolverConfig
    data: dict
    source_hash: str = ""

    @property
    def kp(self) -> float:
        """PLL proportional gain in rad/s per pu of q voltage."""
        return self.kp_per_v * self.base.v_peak_phase

    @property
    def ki(self) -> float:
        return self.ki_per_v * self.base.v_peak_phase

    @property
    def zf_pu(self) -> float:
        return self.fault.zf_pu(self.base) if self.fault else math.inf

    def with_value(self, path: str, value) -> "Scenario":
        data = copy.deepcopy(self.data)
        *parents, leaf = path.split(".")
        node = data
        for part in parents:
            if not isinstance(node.get(part), dict):
                raise UnknownParameter(f"unknown parameter: {path}")
            node = node[part]
        if leaf not in node or isinstance(node[leaf], (dict, list, str)):
            raise UnknownParameter(f"unknown parameter: {path}")
        if leaf.startswith("zf_") and node is data.get("fault"):
            node["zf_ohm"] = node["zf_pu"] = None
        node[leaf] = value
        return scenario_from_dict(data, source_hash=self.source_hash)


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _fill(raw: dict, text: str) -> dict:
    """Check keys against the schema and fill defaults."""

    def fail(msg, field):
        leaf = field.rsplit(".", 1)[-1]
        raise ParseError(msg, _line_of(text, leaf), field)

    out: dict = {}
    top = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    for k in top:
        if k not in _SCHEMA[""]:
            fail("unknown key", k)
    out.update({k: top.get(k, d) for k, d in _SCHEMA[""].items()})

    sections = {k: v for k, v in raw.items() if isinstance(v, dict)}
    for name in sections:
        if name not in _SCHEMA and name != "network":
            fail("unknown section", name)

    def section(name, body):
        spec = _SCHEMA[name]
        for k, v in body.items():
            if isinstance(v, dict):
                if f"{name}.{k}" not in _SCHEMA:
                    fail("unknown section", f"{name}.{k}")
                continue
            if k not in spec:
                fail("unknown key", f"{name}.{k}")
        return {k: body.get(k, d) for k, d in spec.items()}

    for name in _SCHEMA:
        if name in ("", "fault.currents"):
            continue
        if name in _OPTIONAL_SECTIONS and name not in sections:
            continue
        out[name] = section(name, sections.get(name, {}))
    if "fault" in sections and "currents" in sections["fault"]:
        out["fault"]["currents"] = section("fault.currents", sections["fault"]["currents"])

    net = sections.get("network", {})
    out["network"] = {}
    for k, v in net.items():
        if k not in ("zg1", "zg2", "zg0") or not isinstance(v, dict):
            fail("unknown key", f"network.{k}")
        for kk in v:
            if kk not in _IMPEDANCE_KEYS:
                fail("unknown key", f"network.{k}.{kk}")
        out["network"][k] = {kk: v.get(kk, d) for kk, d in _IMPEDANCE_KEYS.items()}
    if "zg1" not in out["network"]:
        fail("missing required table", "network.zg1")
    for k in ("zg2", "zg0"):
        if k not in out["network"]:
            log.info("network.%s not given; using zg1", k)
            out["network"][k] = dict(out["network"]["zg1"])
    return out


def _num(data: dict, path: str, text: str = "") -> float:
    node = data
    for p in path.split("."):
        node = node[p]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ParseError(f"expected a number, got {node!r}", _line_of(text, path.rsplit(".", 1)[-1]), path)
    return float(node)


def scenario_from_dict(data: dict, source_hash: str = "", text: str = "") -> Scenario:
    def num(path):
        return _num(data, path, text)

    if data["schema_version"] != SCHEMA_VERSION:
        raise ValidationError(
            f"schema_version == {SCHEMA_VERSION}", f"got {data['schema_version']!r}"
        )
    b = data["base"]
    base = seqnet.BaseQuantities(num("base.s_base_va"), num("base.v_base_ll_v"), num("base.f0_hz"))
    z = {
        k: seqnet.SequenceImpedance(num(f"network.{k}.r_pu"), num(f"network.{k}.l_pu"))
        for k in ("zg1", "zg2", "zg0")
    }
    if z["zg1"].is_zero:
        raise ValidationError("grid branch impedance nonzero", "network.zg1 is zero")
    network = seqnet.SequenceImpedanceSet(z["zg1"], z["zg2"], z["zg0"])

    pll = data["pll"]
    notch = None
    if pll["notch_enabled"]:
        center_hz = pll["notch_center_hz"]
        center_hz = 2 * b["f0_hz"] if center_hz is None else center_hz
        notch = NotchFilterDesign(
            center=2 * math.pi * float(center_hz),
            zeta=num("pll.notch_zeta"),
            sample_dt=num("solver.dt_s"),
        )

    pre = data["prefault"]
    prefault_refs = CurrentRefs(num("prefault.id_pu"), num("prefault.iq_pu"), num("prefault.iq_neg_pu"))

    fault = None
    fault_refs = None
    gridcode = None
    fd = data.get("fault")
    if fd is not None:
        if fd["kind"] is None:
            raise ParseError("missing key", _line_of(text, "kind"), "fault.kind")
        try:
            kind = seqnet.FaultKind(fd["kind"])
        except ValueError:
            raise ParseError(f"unknown fault kind {fd['kind']!r}", _line_of(text, "kind"), "fault.kind") from None
        if fd["zf_ohm"] is not None and fd["zf_pu"] is not None:
            raise ValidationError("exactly one of fault.zf_ohm, fault.zf_pu")
        if fd["zf_ohm"] is not None:
            zf_val, unit = num("fault.zf_ohm"), "ohm"
        elif fd["zf_pu"] is not None:
            zf_val, unit = num("fault.zf_pu"), "pu"
        elif kind is seqnet.FaultKind.BALANCED_3PH:
            zf_val, unit = 0.0, "pu"
        else:
            raise ParseError("missing key", None, "fault.zf_ohm")
        if fd["t_on_s"] is None:
            raise ParseError("missing key", _line_of(text, "t_on_s"), "fault.t_on_s")
        t_clear = None if fd["t_clear_s"] is None else num("fault.t_clear_s")
        fault = seqnet.FaultSpec(kind, zf_val, unit, num("fault.t_on_s"), t_clear)
        cur = fd.get("currents")
        if cur is not None:
            for k in ("id_pu", "iq_pu"):
                if cur[k] is None:
                    raise ParseError("missing key", _line_of(text, k), f"fault.currents.{k}")
            fault_refs = CurrentRefs(
                num("fault.currents.id_pu"), num("fault.currents.iq_pu"), num("fault.currents.iq_neg_pu")
            )
    if "gridcode" in data:
        g = data["gridcode"]
        gridcode = GridCodeParams(
            k_pos=num("gridcode.k_pos"),
            k_neg=num("gridcode.k_neg"),
            deadband=num("gridcode.deadband_pu"),
            iq_total_max=num("gridcode.iq_total_max_pu"),
            i_total_max=num("gridcode.i_total_max_pu"),
            id_post_ramp=num("postfault.id_ramp_pu_per_s"),
        )
    if fault is not None and fault_refs is None and gridcode is None:
        raise ValidationError("fault currents given by [fault.currents] or [gridcode]")
    if fault_refs is not None and gridcode is not None:
        raise ValidationError("only one of [fault.currents] and [gridcode]")

    retained = num("fault.retained_voltage_pu") if fd is not None else 1.0
    if not 0.0 <= retained <= 1.0:
        raise ValidationError("fault.retained_voltage_pu in [0, 1]", f"got {retained}")

    id_ramp = num("postfault.id_ramp_pu_per_s")
    if not id_ramp > 0:
        raise ValidationError("postfault.id_ramp_pu_per_s > 0", f"got {id_ramp}")

    pts = data["grid_frequency"]["points_hz"]
    if pts is None:
        pts = [[0.0, b["f0_hz"]]]
    try:
        freq = PiecewiseLinearSignal([(float(t), 2 * math.pi * float(f)) for t, f in pts])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad points_hz: {exc}", _line_of(text, "points_hz"), "grid_frequency.points_hz") from None

    s = data["solver"]
    threshold = s["diverge_threshold_radps"]
    solver = SolverConfig(
        dt=num("solver.dt_s"),
        output_dt=num("solver.output_dt_s"),
        diverge_threshold=10 * base.omega0 if threshold is None else num("solver.diverge_threshold_radps"),
        rate_reset=bool(s["rate_reset"]),
    )
    t_end = num("solver.t_end_s")
    if fault is not None and not t_end > fault.t_on:
        raise ValidationError("t_end > fault.t_on", f"{t_end} <= {fault.t_on}")
    if fault is not None and fault.t_on < 0:
        raise ValidationError("fault.t_on >= 0", f"got {fault.t_on}")
    if pre["vg_pu"] <= 0:
        raise ValidationError("prefault.vg_pu > 0", f"got {pre['vg_pu']}")
    if pll["refmodel_method"] not in ("rk4", "discrete"):
        raise ValidationError("pll.refmodel_method in {rk4, discrete}", pll["refmodel_method"])
    if num("pll.ki_radps2_per_v") <= 0 or num("pll.kp_radps_per_v") < 0:
        raise ValidationError("ki > 0 and kp >= 0")

    return Scenario(
        name=str(data["name"]),
        seed=int(data["seed"]),
        base=base,
        network=network,
        kp_per_v=num("pll.kp_radps_per_v"),
        ki_per_v=num("pll.ki_radps2_per_v"),
        notch=notch,
        cc_tau=num("pll.cc_tau_s"),
        refmodel_method=pll["refmodel_method"],
        vg=num("prefault.vg_pu"),
        prefault_refs=prefault_refs,
        fault=fault,
        retained_voltage=retained,
        fault_refs=fault_refs,
        gridcode=gridcode,
        gridcode_tol=num("gridcode.tol_pu") if gridcode else 1e-9,
        gridcode_max_iter=int(data["gridcode"]["max_iter"]) if gridcode else 200,
        id_ramp=id_ramp,
        grid_frequency=freq,
        t_end=t_end,
        solver=solver,
        data=data,
        source_hash=source_hash,
    )


def parse_scenario(text: str, source_hash: str | None = None) -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(str(exc), int(m.group(1)) if m else None) from None
    if source_hash is None:
        source_hash = hashlib.sha256(text.encode()).hexdigest()
    try:
        return scenario_from_dict(_fill(raw, text), source_hash, text)
    except KeyError as exc:
        raise ParseError(f"malformed scenario: {exc}") from None


def load_scenario(path) -> Scenario:
    raw = Path(path).read_bytes()
    return parse_scenario(raw.decode("utf-8"), hashlib.sha256(raw).hexdigest())


def bundled_path(name: str) -> Path:
    """Path of a scenario shipped with the package (``.scn`` optional)."""
    if not name.endswith(".scn"):
        name += ".scn"
    return Path(__file__).parent / "data" / name


def load_bundled(name: str) -> Scenario:
    return load_scenario(bundled_path(name))
