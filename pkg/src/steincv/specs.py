"""Parsers for the ``name:key=value,...`` mini-language used by the CLI.

Methods::

    mc
    zv:q=2
    rzv:q=2,penalty=ridge,cv=10       (or lambda=0.1 for a fixed penalty)
    lzv:q=3                           (lasso shorthand, same keys as rzv)
    sa:k=25  do:k=50,rowfrac=0.8  mo:k=25
    ens:k=10,selection=srswor,weights=inverse-variance

Ensemble keys: ``k, qmax, qbase, jstar, rowfrac, weights, selection``.

Targets::

    gaussian:d=2[,mean=0,var=1,rho=0]
    banana:d=2[,b=0.5,scale=1]

Integrands are comma-separated monomials in 1-based coordinates:
``theta`` (every coordinate), ``theta1``, ``theta1^2``, ``theta1*theta2``,
``theta^2`` (every square).
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import enumerate_basis
from .ensemble import EnsembleConfig, ensemble_estimate, fit_ensemble
from .errors import SpecParseError
from .stein import SampleSet, build_design_matrix
from .targets import TargetModel, banana_target, gaussian_target
from .zvcv import Estimate, fit_zvcv, fit_zvcv_regularised, vanilla_mc


def parse_spec(text: str) -> tuple[str, dict[str, str]]:
    text = text.strip()
    if not text:
        raise SpecParseError("empty specification")
    name, _, rest = text.partition(":")
    params = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq or not key.strip() or not value.strip():
                raise SpecParseError(f"malformed parameter {item!r} in {text!r}")
            params[key.strip().lower()] = value.strip()
    return name.strip().lower(), params


def _int(params, key, default=None, spec=""):
    if key not in params:
        return default
    try:
        return int(params[key])
    except ValueError:
        raise SpecParseError(f"{key}={params[key]!r} is not an integer in {spec!r}") from None


def _float(params, key, default=None, spec=""):
    if key not in params:
        return default
    try:
        return float(params[key])
    except ValueError:
        raise SpecParseError(f"{key}={params[key]!r} is not a number in {spec!r}") from None


def _auto_int(params, key, spec):
    if params.get(key, "auto") == "auto":
        return None
    return _int(params, key, spec=spec)


def _reject_unknown(params, allowed, spec):
    unknown = set(params) - set(allowed)
    if unknown:
        raise SpecParseError(f"unknown parameter(s) {sorted(unknown)} in {spec!r}")


_WEIGHT_ALIASES = {"uniform": "uniform", "inverse": "inverse-variance", "inverse-variance": "inverse-variance", "inv": "inverse-variance"}


@dataclass(frozen=True)
class Method:
    """A parsed estimator.  ``run`` returns the estimate and postprocessing seconds."""

    name: str
    params: dict = field(default_factory=dict)
    spec: str = ""

    @property
    def label(self) -> str:
        return self.spec or self.name

    def run(self, samples: SampleSet, F, seed=0, threads: int = 1) -> tuple[Estimate, float]:
        start = time.perf_counter()
        est = self._run(samples, F, seed, threads)
        return est, time.perf_counter() - start

    def _run(self, samples, F, seed, threads):
        p = self.params
        if self.name == "mc":
            return vanilla_mc(F)
        if self.name == "zv":
            return fit_zvcv(samples, F, p["q"], threads=threads)
        if self.name == "rzv":
            return fit_zvcv_regularised(
                samples, F, p["q"], penalty=p["penalty"], lam=p.get("lambda"), folds=p["cv"], seed=seed, threads=threads
            )
        config = replace(p["config"], seed=int(seed if p["seed"] is None else p["seed"]))
        resolved = config.resolve(samples.dim, samples.n_samples)
        Z = build_design_matrix(samples, enumerate_basis(samples.dim, resolved.q_max), threads=threads)
        model = fit_ensemble(samples, F, resolved, threads=threads, design=Z)
        return ensemble_estimate(model, Z, F)


def parse_method(text: str) -> Method:
    name, params = parse_spec(text)
    if name == "mc":
        _reject_unknown(params, (), text)
        return Method("mc", {}, text.strip())
    if name == "zv":
        _reject_unknown(params, ("q",), text)
        q = _int(params, "q", 1, text)
        if q < 1:
            raise SpecParseError(f"q must be >= 1 in {text!r}")
        return Method("zv", {"q": q}, text.strip())
    if name in ("rzv", "lzv"):
        _reject_unknown(params, ("q", "penalty", "cv", "lambda"), text)
        penalty = params.get("penalty", "ridge" if name == "rzv" else "lasso")
        if penalty not in ("ridge", "lasso"):
            raise SpecParseError(f"penalty must be ridge or lasso in {text!r}")
        q = _int(params, "q", 1, text)
        folds = _int(params, "cv", 10, text)
        lam = _float(params, "lambda", None, text)
        if q < 1 or folds < 2 or (lam is not None and lam < 0):
            raise SpecParseError(f"invalid regularised ZVCV parameters in {text!r}")
        return Method("rzv", {"q": q, "penalty": penalty, "cv": folds, "lambda": lam}, text.strip())
    if name in ("sa", "do", "mo", "ens"):
        _reject_unknown(params, ("k", "qmax", "qbase", "jstar", "rowfrac", "weights", "selection", "seed"), text)
        overrides = {}
        for key, attr in (("k", "k"), ("qmax", "q_max")):
            if key in params:
                overrides[attr] = _int(params, key, spec=text)
        overrides["q_base"] = _auto_int(params, "qbase", text)
        overrides["j_star"] = _auto_int(params, "jstar", text)
        if "rowfrac" in params:
            overrides["row_fraction"] = _float(params, "rowfrac", spec=text)
        if "weights" in params:
            if params["weights"] not in _WEIGHT_ALIASES:
                raise SpecParseError(f"unknown weights {params['weights']!r} in {text!r}")
            overrides["weight_scheme"] = _WEIGHT_ALIASES[params["weights"]]
        if "selection" in params:
            overrides["selection"] = params["selection"]
        seed = _int(params, "seed", None, text)
        try:
            if name == "ens":
                config = EnsembleConfig(**overrides)
            else:
                config = EnsembleConfig.from_preset(name, **overrides)
        except (TypeError, ValueError) as exc:
            raise SpecParseError(f"invalid ensemble parameters in {text!r}: {exc}") from None
        # seed=None means "take the run seed"
        return Method(name, {"config": config, "seed": seed}, text.strip())
    raise SpecParseError(f"unknown method {name!r} in {text!r}")


def parse_target(text: str) -> TargetModel:
    name, params = parse_spec(text)
    d = _int(params, "d", None, text)
    if name == "gaussian":
        _reject_unknown(params, ("d", "mean", "var", "rho"), text)
        d = 1 if d is None else d
        if d < 1:
            raise SpecParseError(f"d must be >= 1 in {text!r}")
        mean = _float(params, "mean", 0.0, text)
        var = _float(params, "var", 1.0, text)
        rho = _float(params, "rho", 0.0, text)
        cov = var * ((1 - rho) * np.eye(d) + rho * np.ones((d, d)))
        try:
            return gaussian_target(np.full(d, mean), cov)
        except ValueError as exc:
            raise SpecParseError(f"invalid Gaussian target {text!r}: {exc}") from None
    if name == "banana":
        _reject_unknown(params, ("d", "b", "scale"), text)
        try:
            return banana_target(2 if d is None else d, _float(params, "b", 0.5, text), _float(params, "scale", 1.0, text))
        except ValueError as exc:
            raise SpecParseError(f"invalid banana target {text!r}: {exc}") from None
    raise SpecParseError(f"unknown target {name!r} in {text!r}")


_FACTOR = re.compile(r"^theta(\d*)(?:\^(\d+))?$")


def parse_integrands(text: str, d: int) -> list[tuple[int, ...]]:
    """Monomial exponent tuples for an integrand specification."""
    out = []
    for token in text.replace(" ", "").split(","):
        if not token:
            raise SpecParseError(f"empty integrand in {text!r}")
        if token in ("theta", "theta^1"):
            out.extend(tuple(int(i == j) for i in range(d)) for j in range(d))
            continue
        if token == "theta^2":
            out.extend(tuple(2 * int(i == j) for i in range(d)) for j in range(d))
            continue
        exps = [0] * d
        for factor in token.split("*"):
            m = _FACTOR.match(factor)
            if not m or not m.group(1):
                raise SpecParseError(f"cannot parse integrand {token!r}")
            idx = int(m.group(1)) - 1
            if not 0 <= idx < d:
                raise SpecParseError(f"coordinate {idx + 1} out of range for d={d} in {token!r}")
            exps[idx] += int(m.group(2) or 1)
        out.append(tuple(exps))
    return out


def integrand_names(exponents) -> list[str]:
    names = []
    for exps in exponents:
        parts = []
        for i, a in enumerate(exps):
            if a == 1:
                parts.append(f"theta{i + 1}")
            elif a > 1:
                parts.append(f"theta{i + 1}^{a}")
        names.append("*".join(parts) or "1")
    return names


def evaluate_integrands(thetas, exponents) -> np.ndarray:
    """``(S, T)`` matrix of monomial integrands."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    exps = np.asarray(exponents, dtype=int).reshape(len(exponents), thetas.shape[1])
    out = np.ones((thetas.shape[0], exps.shape[0]))
    for i in range(thetas.shape[1]):
        out *= thetas[:, i : i + 1] ** exps[:, i]
    return out
