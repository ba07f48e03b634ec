#!/usr/bin/env python3
"""Smoke test for the nlridge_py extension module.

Builds the extension with cargo when it is not already importable,
copies it next to a temporary directory under the right module name,
and exercises the public functions end to end.

Run from anywhere:  python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def ensure_module():
    try:
        import nlridge_py  # noqa: F401

        return
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "-p", "nlridge-py"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "debug" / "libnlridge_py.so"
    if not built.exists():  # non-Linux fallbacks
        for candidate in ("libnlridge_py.dylib", "nlridge_py.dll"):
            alt = ROOT / "target" / "debug" / candidate
            if alt.exists():
                built = alt
                break
    stage = Path(tempfile.mkdtemp(prefix="nlridge_py_"))
    shutil.copy2(built, stage / "nlridge_py.so")
    sys.path.insert(0, str(stage))


def textured(height, width):
    import numpy as np

    i = np.arange(height)[:, None]
    j = np.arange(width)[None, :]
    return 125.0 + 80.0 * np.sin(0.35 * i) * np.cos(0.22 * j)


def main():
    ensure_module()
    import numpy as np
    import nlridge_py

    clean = textured(64, 64)

    # Calibrated defaults are exposed as plain dicts.
    params = nlridge_py.default_params(25.0)
    assert params == {
        "patch1": 9,
        "patch2": 9,
        "k1": 18,
        "k2": 90,
        "window": 37,
        "stride": 4,
    }, params

    # Corruption is seeded and reproducible.
    noisy = nlridge_py.add_noise(clean, sigma=25.0, seed=1)
    again = nlridge_py.add_noise(clean, sigma=25.0, seed=1)
    assert np.array_equal(noisy, again)
    assert nlridge_py.add_noise(clean, poisson=True, seed=2).shape == clean.shape

    # PSNR helper, including the exact-match sentinel.
    p_noisy = nlridge_py.psnr(noisy, clean)
    assert 18.0 < p_noisy < 23.0, p_noisy
    assert math.isinf(nlridge_py.psnr(clean, clean))

    # Two-step denoising improves PSNR at both steps.
    pilot, final = nlridge_py.denoise(
        noisy,
        sigma=25.0,
        constraint="affine",
        patch1=5,
        patch2=5,
        k1=12,
        k2=16,
        window=17,
        stride=3,
        seed=0,
    )
    p1 = nlridge_py.psnr(pilot, clean)
    p2 = nlridge_py.psnr(final, clean)
    assert p1 > p_noisy and p2 > p_noisy, (p_noisy, p1, p2)

    # Library errors arrive as ValueError.
    try:
        nlridge_py.denoise(noisy)
    except ValueError:
        pass
    else:
        raise AssertionError("missing noise model should raise ValueError")
    try:
        nlridge_py.denoise(noisy, sigma=25.0, constraint="quadratic")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown constraint should raise ValueError")

    print(
        f"ok: psnr {p_noisy:.2f} -> {p1:.2f} -> {p2:.2f} dB; "
        "defaults, determinism, and error mapping verified"
    )


if __name__ == "__main__":
    main()
