"""Experiment configuration: one INI file describes one run."""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field

from .disorder import Bernoulli, DisorderSpec, format_family, parse_family

__all__ = ["ConfigError", "ExperimentConfig", "COMMANDS", "PARAMS", "content_hash"]


class ConfigError(ValueError):
    """Invalid configuration; ``reason`` is a short machine-readable code."""

    def __init__(self, reason, message):
        super().__init__(message)
        self.reason = reason


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _at_least(n):
    return lambda v: v >= n


def _each(check):
    return lambda vs: all(check(v) for v in vs)


def _nonempty_each(check):
    return lambda vs: len(vs) > 0 and all(check(v) for v in vs)


def _any(v):
    return True


# name -> (kind, default, check, rule text)
PARAMS = {
    "lyapunov": {
        "energies": ("floats", (), _each(math.isfinite), "finite; empty = spectrum hull grid"),
        "grid_step": ("float", 0.05, _pos, "> 0"),
        "steps": ("int", 100_000, _at_least(1000), ">= 1000"),
        "replicas": ("int", 8, _at_least(1), ">= 1"),
    },
    "ids": {
        "energies": ("floats", (), _each(math.isfinite), "finite; empty = spectrum hull grid"),
        "grid_step": ("float", 0.05, _pos, "> 0"),
        "n_sites": ("int", 1000, _at_least(100), ">= 100"),
        "replicas": ("int", 20, _at_least(1), ">= 1"),
    },
    "thouless": {
        "energies": ("floats", (-1.5, -0.5, 0.7, 1.9, 3.1), _nonempty_each(math.isfinite),
                     "nonempty, finite"),
        "n_sites": ("int", 1000, _at_least(100), ">= 100"),
        "replicas": ("int", 50, _at_least(1), ">= 1"),
        "steps": ("int", 100_000, _at_least(1000), ">= 1000"),
        "lyapunov_replicas": ("int", 8, _at_least(1), ">= 1"),
    },
    "correlator": {
        "L": ("int", 100, _at_least(1), ">= 1"),
        "x0": ("int", 0, _any, "inside [-L, L]"),
        "replica": ("int", 0, _nonneg, ">= 0"),
    },
    "annealed": {
        "x_list": ("ints", (0, 2, 4, 6, 8, 10, 12), _nonempty_each(_any), "nonempty, |x| <= L/2"),
        "L": ("int", 100, _at_least(1), ">= 1"),
        "replicas": ("int", 1000, _at_least(10), ">= 10"),
    },
    "rare-event": {
        "K": ("int", 2, _nonneg, ">= 0"),
        "x_list": ("ints", (8, 12, 16, 20, 24), _nonempty_each(_at_least(1)),
                   "nonempty, >= 1, (K+1) x < L"),
        "L": ("int", 100, _at_least(2), ">= 2"),
        "replicas": ("int", 200, _at_least(2), ">= 2"),
        "eta": ("float", 0.0, _nonneg, ">= 0; 0 = exact-zero event"),
    },
    "resonance": {
        "tau": ("float", 1.5, _pos, "> 0"),
        "N_list": ("ints", (4, 6, 8, 10), _nonempty_each(_at_least(2)), "nonempty, >= 2"),
        "energies": ("floats", (), _each(math.isfinite), "finite; empty = spectrum hull grid"),
        "grid_step": ("float", 0.02, _pos, "> 0"),
        "replicas": ("int", 100, _at_least(1), ">= 1"),
    },
    "separation": {
        "a_list": ("floats", (8.0, 16.0, 32.0, 64.0), _nonempty_each(_nonneg),
                   "nonempty, >= 0"),
        "K": ("int", 2, _nonneg, ">= 0"),
        "x_list": ("ints", tuple(range(8, 25)), _nonempty_each(_at_least(1)),
                   "nonempty, >= 1, (K+1) x < L"),
        "L": ("int", 100, _at_least(2), ">= 2"),
        "replicas": ("int", 200, _at_least(2), ">= 2"),
        "gamma_steps": ("int", 100_000, _at_least(1000), ">= 1000"),
        "gamma_replicas": ("int", 8, _at_least(1), ">= 1"),
        "grid_step": ("float", 0.05, _pos, "> 0"),
    },
    "report": {
        "inputs": ("paths", (), lambda vs: len(vs) > 0, "nonempty list of run directories"),
    },
}

COMMANDS = tuple(PARAMS)


def _parse_value(kind, text):
    text = text.strip()
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if kind == "ints":
        return tuple(int(p) for p in parts)
    if kind == "floats":
        return tuple(float(p) for p in parts)
    return tuple(parts)


def _format_value(kind, value):
    if kind == "int":
        return str(int(value))
    if kind == "float":
        return repr(float(value))
    if kind == "ints":
        return ", ".join(str(int(v)) for v in value)
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    return ", ".join(value)


def _coerce(kind, value):
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "ints":
        return tuple(int(v) for v in value)
    if kind == "floats":
        return tuple(float(v) for v in value)
    return tuple(str(v) for v in value)


def content_hash(text):
    """Git blob hash of ``text``."""
    data = text.encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class ExperimentConfig:
    command: str
    disorder: DisorderSpec = field(default_factory=lambda: DisorderSpec(Bernoulli(0.5)))
    params: dict = field(default_factory=dict)
    out: str = "results"
    threads: int = 1

    def __post_init__(self):
        if self.command not in PARAMS:
            raise ConfigError("unknown-command", f"unknown command {self.command!r}")
        schema = PARAMS[self.command]
        unknown = set(self.params) - set(schema)
        if unknown:
            raise ConfigError("unknown-parameter", f"unknown parameters {sorted(unknown)}")
        full = {}
        for name, (kind, default, _, _) in schema.items():
            try:
                full[name] = _coerce(kind, self.params.get(name, default))
            except (TypeError, ValueError) as exc:
                raise ConfigError("bad-value", f"{name}: {exc}") from None
        self.params = full
        if int(self.threads) < 1:
            raise ConfigError("bad-threads", "threads must be >= 1")
        self.threads = int(self.threads)
        self.validate()

    def validate(self):
        for name, (kind, _, check, rule) in PARAMS[self.command].items():
            value = self.params[name]
            try:
                ok = check(value)
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise ConfigError("out-of-range", f"{self.command}.{name} = {value!r}: need {rule}")
        p = self.params
        if self.command == "annealed" and max(abs(x) for x in p["x_list"]) > p["L"] / 2:
            raise ConfigError("out-of-range", "annealed: |x| must be <= L/2")
        if self.command in ("rare-event", "separation"):
            if not (p["K"] + 1) * max(p["x_list"]) < p["L"]:
                raise ConfigError("out-of-range", f"{self.command}: need (K+1) max(x) < L")
        if self.command == "correlator" and abs(p["x0"]) > p["L"]:
            raise ConfigError("out-of-range", "correlator: x0 outside [-L, L]")

    # -- text form -------------------------------------------------------------

    def to_ini(self, include_run=True):
        lines = []
        if include_run:
            lines += ["[run]", f"command = {self.command}", f"out = {self.out}",
                      f"threads = {self.threads}", ""]
        else:
            lines += ["[run]", f"command = {self.command}", ""]
        lines += [
            "[disorder]",
            f"family = {format_family(self.disorder.family)}",
            f"coupling = {float(self.disorder.coupling)!r}",
            f"seed = {int(self.disorder.seed)}",
            "",
            f"[{self.command}]",
        ]
        for name, (kind, _, _, _) in PARAMS[self.command].items():
            lines.append(f"{name} = {_format_value(kind, self.params[name])}")
        return "\n".join(lines) + "\n"

    def content_hash(self):
        """Hash of everything that determines the results (not threads or out)."""
        return content_hash(self.to_ini(include_run=False))

    @classmethod
    def from_ini(cls, text):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("syntax", str(exc)) from None
        if not cp.has_section("run") or "command" not in cp["run"]:
            raise ConfigError("missing-command", "[run] command is required")
        run = cp["run"]
        command = run["command"].strip()
        if command not in PARAMS:
            raise ConfigError("unknown-command", f"unknown command {command!r}")
        extra = set(cp.sections()) - {"run", "disorder", command}
        if extra:
            raise ConfigError("unknown-section", f"unexpected sections {sorted(extra)}")
        extra = set(run) - {"command", "out", "threads"}
        if extra:
            raise ConfigError("unknown-parameter", f"unknown [run] keys {sorted(extra)}")
        try:
            threads = int(run.get("threads", "1"))
            disorder = _parse_disorder(cp["disorder"] if cp.has_section("disorder") else {})
            params = {}
            schema = PARAMS[command]
            if cp.has_section(command):
                for key, text in cp[command].items():
                    if key not in schema:
                        raise ConfigError("unknown-parameter", f"unknown key {command}.{key}")
                    params[key] = _parse_value(schema[key][0], text)
        except ConfigError:
            raise
        except (TypeError, ValueError, SyntaxError) as exc:
            raise ConfigError("bad-value", str(exc)) from None
        return cls(command, disorder, params, run.get("out", "results").strip(), threads)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("unreadable", str(exc)) from None
        return cls.from_ini(text)


def _parse_disorder(section):
    extra = set(section) - {"family", "coupling", "seed"}
    if extra:
        raise ConfigError("unknown-parameter", f"unknown [disorder] keys {sorted(extra)}")
    family = parse_family(section.get("family", "bernoulli(p=0.5)"))
    coupling = float(section.get("coupling", "1.0"))
    if not math.isfinite(coupling):
        raise ConfigError("out-of-range", "coupling must be finite")
    return DisorderSpec(family, coupling, int(section.get("seed", "0")))


def example_ini(command):
    """A complete config for ``command`` with every default spelled out."""
    return ExperimentConfig(command).to_ini()

