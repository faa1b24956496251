#!/usr/bin/env python3
"""Smoke test for the sjd_engine extension module.

Builds nothing itself: run `cargo build -p sjd-python` (or --release)
first. The script locates the compiled cdylib, exposes it as a Python
module and exercises the main types and operations.
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO_ROOT / "target" / "release" / "libsjd_engine.so",
        REPO_ROOT / "target" / "debug" / "libsjd_engine.so",
    ]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        sys.exit(
            "libsjd_engine.so not found; run `cargo build -p sjd-python` first"
        )
    stage = Path(tempfile.mkdtemp(prefix="sjd_engine_"))
    shutil.copy2(lib, stage / "sjd_engine.so")
    sys.path.insert(0, str(stage))
    import sjd_engine

    return sjd_engine


def main():
    sjd = load_module()

    # --- model specs ------------------------------------------------------
    hash_model = sjd.ModelSpec.preset("hash")
    assert hash_model.vocab_size == 64
    round_tripped = sjd.ModelSpec.from_json(hash_model.to_json())
    assert round_tripped.to_json() == hash_model.to_json()

    ngram = sjd.ModelSpec.preset("ngram")
    assert ngram.vocab_size == 8

    try:
        sjd.ModelSpec.preset("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset should raise")

    # --- decoding ---------------------------------------------------------
    config = sjd.DecodeConfig(mode="sjd", window=8, top_k=16, grid=(8, 8), seed=7)
    assert config.total_tokens == 64
    result = sjd.decode(hash_model, config)
    assert len(result.tokens) == 64
    assert all(0 <= t < 64 for t in result.tokens)
    assert result.steps <= 64
    assert result.step_compression >= 1.0

    again = sjd.decode(hash_model, config)
    assert again.tokens == result.tokens and again.steps == result.steps

    trace = json.loads(result.trace_json())
    assert sum(r["accepted_count"] + r["committed_by_resample"] for r in trace) == 64

    ar = sjd.decode(hash_model, sjd.DecodeConfig(mode="ar", grid=(8, 8), seed=7))
    assert ar.steps == 64 and ar.step_compression == 1.0

    # Greedy collapse: all four modes agree token-for-token at top_k=1.
    greedy_tokens = [
        sjd.decode(
            ngram,
            sjd.DecodeConfig(mode=mode, window=4, top_k=1, grid=(4, 4), seed=5),
        ).tokens
        for mode in ("ar", "jacobi", "sjd", "sjdpp")
    ]
    assert all(t == greedy_tokens[0] for t in greedy_tokens)

    # SJD++ reuses tokens on the structured model.
    sjdpp = sjd.decode(
        ngram, sjd.DecodeConfig(mode="sjdpp", window=16, top_k=8, grid=(16, 16), seed=3)
    )
    reused = sum(r["reused_count"] for r in json.loads(sjdpp.trace_json()))
    assert reused > 0

    # --- distribution helpers ---------------------------------------------
    shaped = sjd.shape_distribution([0.0, math.log(2.0), math.log(4.0)], 1.0, 2)
    assert abs(shaped[0]) < 1e-12
    assert abs(shaped[1] - 1 / 3) < 1e-12
    assert abs(shaped[2] - 2 / 3) < 1e-12

    marginal = sjd.one_step_marginal([0.5, 0.5], [0.9, 0.1])
    assert abs(marginal[0] - 0.9) < 1e-12 and abs(marginal[1] - 0.1) < 1e-12

    # --- bench + oracle ----------------------------------------------------
    report = json.loads(
        sjd.run_bench_json(
            json.dumps(
                {
                    "model": json.loads(ngram.to_json()),
                    "decode": {"mode": "sjdpp", "grid": {"height": 8, "width": 8}, "top_k": 8},
                    "seeds": {"base": 1, "count": 5},
                }
            )
        )
    )
    assert report["cells"][0]["aggregates"]["runs"] == 5
    assert report["cells"][0]["aggregates"]["mean_step_compression"] >= 1.0

    verdict = json.loads(sjd.oracle_suite(trials=50_000, seed=0))
    assert verdict["identity_max_err"] < 1e-12
    assert verdict["tv_sjdpp"] < 0.1
    print("verdict @50k trials:", verdict)

    print("smoke test passed")


if __name__ == "__main__":
    main()
