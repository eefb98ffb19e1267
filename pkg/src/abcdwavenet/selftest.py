"""Embedded invariant checks run by ``abcdwavenet selftest``."""
from __future__ import annotations

from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .dynamic_conv import DynamicConvParams, complexity_report, dynamic_conv2d
from .fog import FogParams, synthesize_fog
from .metrics import confusion, f1, iou, miou, mpa
from .tensor_core import ConvSpec, conv2d
from .wavelet_bis import dwt2d, idwt2d

CheckResult = Tuple[bool, str]


def _reconstruction(fault: bool) -> CheckResult:
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        x = rng.standard_normal((2, 4, 16, 16)).astype(np.float32)
        bands = dwt2d(x)
        if fault:
            bands = bands._replace(hh=bands.hh * np.float32(1.01))
        worst = max(worst, float(np.abs(idwt2d(bands) - x).max()))
    return worst < 1e-5, f"max |idwt(dwt(x)) - x| = {worst:.2e}"


def _dynconv_parity(fault: bool) -> CheckResult:
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10):
        m = int(rng.integers(1, 5))
        x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
        kernels = rng.standard_normal((m, 4, 3, 3, 3)).astype(np.float32)
        p = DynamicConvParams(kernels, rng.standard_normal((3, 3)).astype(np.float32),
                              rng.standard_normal((m, 3)).astype(np.float32))
        alpha = rng.uniform(0.05, 0.95, (2, m)).astype(np.float32)
        fast = dynamic_conv2d(x, p, alpha)
        ref = np.zeros_like(fast)
        for k in range(m):
            ref += alpha[:, k, None, None, None] * conv2d(x, kernels[k], padding=1)
        if fault:
            ref[0, 0, 0, 0] += 1.0
        worst = max(worst, float(np.abs(fast - ref).max()))
    return worst < 1e-4, f"aggregate-vs-per-kernel max diff = {worst:.2e}"


def _metric_fixture(fault: bool) -> CheckResult:
    pred = np.array([[1, 1], [0, 0]])
    gt = np.array([[1, 0], [1, 0]])
    if fault:
        gt = pred
    cm = confusion(pred, gt)
    got = (iou(cm), f1(cm), miou(cm), mpa(cm))
    ok = np.allclose(got, (1 / 3, 0.5, 1 / 3, 0.5), rtol=0, atol=1e-12)
    return bool(ok), "IoU/F1/MIoU/MPA = " + "/".join(f"{v:.4f}" for v in got)


def _fog_fixture(fault: bool) -> CheckResult:
    kappa = np.log(2.0) * (1.5 if fault else 1.0)
    out = synthesize_fog(np.full((2, 2), 0.5), np.ones((2, 2)), FogParams(kappa, 1.0))
    return bool(np.allclose(out, 0.75, atol=1e-7)), f"J=0.5, A=1, t=0.5 -> {float(out[0, 0]):.6f}"


def _complexity_fixture(fault: bool) -> CheckResult:
    cc = complexity_report(ConvSpec(3, 8, 3), 2, 4, 4)
    params = cc.dynamic_params + (1 if fault else 0)
    return params == 447, f"dynamic params C_in=3, C_out=8, K=3, M=2 -> {params}"


CHECKS: Dict[str, Callable[[bool], CheckResult]] = {
    "perfect_reconstruction": _reconstruction,
    "dynamic_conv_parity": _dynconv_parity,
    "metric_fixture": _metric_fixture,
    "fog_fixture": _fog_fixture,
    "complexity_fixture": _complexity_fixture,
}


def run_selftest(inject_fault: Optional[str] = None) -> List[Tuple[str, bool, str]]:
    if inject_fault is not None and inject_fault not in CHECKS:
        raise KeyError(f"unknown check {inject_fault!r}; choose from {', '.join(CHECKS)}")
    results = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn(name == inject_fault)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
