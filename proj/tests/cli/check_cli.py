#!/usr/bin/env python3
"""Runs every subcommand on small configs, validates the JSON against the
shipped schemas, checks determinism and the documented error paths."""

import json
import math
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

CLI = str(Path(sys.argv[1]).resolve())
SCHEMAS = Path(sys.argv[2])
PAYLOAD = "f0f0f0f00f0f0f0f"
SMALL_BATTERY = {"attack": {"steps": 10, "batch": 16, "trace_every": 5},
                 "battery": {"targets_per_class": 2, "train": 32, "test": 16}}

failures = []


def check(cond, what):
    if not cond:
        failures.append(what)
        print("not ok:", what)


def schema(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def run(args, tmp, expect=0):
    proc = subprocess.run([CLI, *args], cwd=tmp, capture_output=True, text=True)
    check(proc.returncode == expect, f"{' '.join(args)} exited {proc.returncode}, wanted {expect}: {proc.stderr.strip()}")
    return proc


def write_config(tmp, name, cfg):
    p = Path(tmp) / name
    p.write_text(json.dumps(cfg))
    return str(p)


def validate(doc, name, what):
    try:
        jsonschema.validate(doc, schema(name))
    except jsonschema.ValidationError as e:
        check(False, f"{what}: schema {name}: {e.message}")


def report(tmp, cfg_path, command, seed=11, extra=()):
    out = Path(tmp) / f"{command}-{seed}.json"
    run(["--config", cfg_path, "--master-seed", str(seed), "--out", str(out), command, *extra], tmp)
    text = out.read_text() if out.exists() else "{}"
    doc = json.loads(text)
    validate(doc, command, command)
    return doc, text


def expect_error(tmp, args, kind, code=1):
    proc = run(args, tmp, expect=code)
    try:
        err = json.loads(proc.stderr)
    except json.JSONDecodeError:
        check(False, f"{' '.join(args)}: stderr is not JSON: {proc.stderr!r}")
        return
    validate(err, "error", " ".join(args))
    check(err["error"]["kind"] == kind, f"{' '.join(args)}: error kind {err['error']['kind']}, wanted {kind}")


def read_ltn(path):
    raw = Path(path).read_bytes()
    c, h, w = np.frombuffer(raw[4:16], dtype="<u4")
    return raw[:16], np.frombuffer(raw[16:], dtype="<f4").reshape(c, h, w)


def main():
    with tempfile.TemporaryDirectory() as tmp:
        gs = write_config(tmp, "gs.json", {"payload_hex": PAYLOAD})
        tr = write_config(tmp, "tr.json", {"embedder": "tr", "ring_key": {"radius": 16, "seed": 3}})

        # embed / verify, both embedders
        for name, cfg in (("gs", gs), ("tr", tr)):
            ltn = Path(tmp) / f"{name}.ltn"
            run(["--config", cfg, "--master-seed", "5", "--out", str(ltn), "embed"], tmp)
            check(ltn.stat().st_size == 16 + 4 * 4 * 64 * 64, f"{name}: latent file size {ltn.stat().st_size}")
            sidecar = json.loads(Path(str(ltn) + ".json").read_text())
            validate(sidecar, "embed", f"{name} sidecar")
            first = ltn.read_bytes()
            run(["--config", cfg, "--master-seed", "5", "--out", str(ltn), "embed"], tmp)
            check(ltn.read_bytes() == first, f"{name}: embed not deterministic")
            doc, _ = report(tmp, cfg, "verify", extra=[str(ltn)])
            check(doc.get("decision") is True, f"{name}: fresh latent not detected")
            check(doc.get("recovered_seed_hex") == sidecar["seed_hex"], f"{name}: recovered seed differs from sidecar")
            if name == "gs":
                check(doc.get("bit_accuracy") == 1.0, "gs: noiseless bit accuracy not 1.0")

        # default-channel noise: bit error per payload bit is a 192-vote majority
        # at flip rate atan(0.8)/pi, so accuracy stays at 1 unless the seed is lost
        header, z = read_ltn(Path(tmp) / "gs.ltn")
        rng = np.random.default_rng(7)
        accs = []
        for i in range(10):
            noisy = (z + 0.8 * rng.standard_normal(z.shape)).astype("<f4")
            p = Path(tmp) / f"noisy{i}.ltn"
            p.write_bytes(header + noisy.tobytes())
            doc, _ = report(tmp, gs, "verify", extra=[str(p)])
            accs.append(doc.get("bit_accuracy", 0.0))
        q = math.atan(0.8) / math.pi
        bit_err = sum(math.comb(192, k) * q**k * (1 - q) ** (192 - k) for k in range(96, 193))
        check(min(accs) >= 1.0 - 3 * max(bit_err, 1e-3), f"noised verify accuracies {accs}")

        # experiment reports, run twice
        sweep = write_config(tmp, "sweep.json", {"payload_hex": PAYLOAD, "trials": 40, "r_list": [4, 16, 64]})
        bits = write_config(tmp, "bits.json", {"payload_hex": PAYLOAD, "trials": 40, "m_list": [8], **SMALL_BATTERY})
        attack = write_config(tmp, "attack.json", {"payload_hex": PAYLOAD, **SMALL_BATTERY})
        ablate = write_config(tmp, "ablate.json", {"payload_hex": PAYLOAD, "trials": 40})
        ident = write_config(tmp, "ident.json", {"payload_hex": PAYLOAD, "trials": 40, "channel": {"kind": "identity"}})
        for cfg, command in ((sweep, "sweep-redundancy"), (bits, "sweep-seedbits"), (attack, "attack"), (ablate, "ablate-seed")):
            doc, text = report(tmp, cfg, command)
            _, again = report(tmp, cfg, command)
            check(text == again, f"{command}: report not deterministic")
            check(doc.get("master_seed") == 11, f"{command}: master seed missing")
        doc, _ = report(tmp, sweep, "sweep-redundancy")
        aucs = [r["auc"] for r in doc["rows"]]
        check(aucs == sorted(aucs), f"sweep-redundancy AUC not monotone: {aucs}")
        check(len(report(tmp, bits, "sweep-seedbits")[0]["rows"]) == 1, "single-element m_list should give one row")
        doc, _ = report(tmp, ident, "ablate-seed")
        check(doc["with_construction"]["auc"] == 1.0 and doc["without_construction"]["auc"] == 1.0,
              "identity channel ablation should give AUC 1.0 both ways")

        # error paths
        bad = Path(tmp) / "bad.ltn"
        bad.write_bytes(b"XTN1" + (Path(tmp) / "gs.ltn").read_bytes()[4:])
        expect_error(tmp, ["--config", gs, "verify", str(bad)], "bad_magic")
        expect_error(tmp, ["--config", write_config(tmp, "nopayload.json", {}), "--out", "x.ltn", "embed"], "config")
        expect_error(tmp, ["--config", write_config(tmp, "empty_r.json", {"payload_hex": PAYLOAD, "r_list": []}),
                           "sweep-redundancy"], "usage", code=2)
        expect_error(tmp, ["--config", write_config(tmp, "big_m.json", {"payload_hex": PAYLOAD, "trials": 4, "m_list": [128],
                                                                         **SMALL_BATTERY}), "sweep-seedbits"], "capacity")
        expect_error(tmp, ["--config", str(Path(tmp) / "missing.json"), "sweep-redundancy"], "io")
        expect_error(tmp, ["--bogus-flag", "embed"], "usage", code=2)

    if failures:
        print(f"{len(failures)} check(s) failed")
        return 1
    print("all CLI checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
