"""Command-line entry point: ``qss-sim {simulate,crosstalk,visibility-scan,share}``.

Exit codes: 0 success, 2 configuration/input error, 3 security-check failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import optics, secretshare
from .noise import AdversaryModel, ChannelModel, analysis_report, security_threshold
from .protocol import ProtocolConfig, SubsetError, load_session, run_session

log = logging.getLogger("qss_sim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INSECURE = 3

# flag name -> (config section, key)
_CONFIG_KEYS = {
    "dim": ("protocol", "dim"),
    "parties": ("protocol", "parties"),
    "rounds": ("protocol", "rounds"),
    "seed": ("protocol", "seed"),
    "security_fraction": ("protocol", "security_fraction"),
    "mean_photon_number": ("protocol", "mean_photon_number"),
    "fidelity": ("channel", "fidelity"),
    "adversary": ("adversary", "model"),
    "attack_probability": ("adversary", "attack_probability"),
}

DEFAULTS = {
    "protocol": {"dim": 2, "parties": 3, "rounds": 100, "seed": 0, "security_fraction": 0.1,
                 "mean_photon_number": None},
    "channel": {"fidelity": 1.0},
    "adversary": {"model": "none", "attack_probability": 1.0},
}


class ConfigError(Exception):
    pass


class SecurityFailure(Exception):
    pass


# --- file helpers ---------------------------------------------------------


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class OutputSet:
    """Collects the files of one command and writes them plus a manifest."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: dict[str, bytes] = {}

    def add(self, name: str, data: bytes | str) -> None:
        self.files[name] = data.encode() if isinstance(data, str) else data

    def commit(self, command: str, config: dict, seed) -> Path:
        for name, data in self.files.items():
            atomic_write(self.out_dir / name, data)
        manifest = {
            "command": command,
            "config": config,
            "seed": seed,
            "outputs": sorted(self.files),
            "checksums": {name: _sha256(data) for name, data in sorted(self.files.items())},
        }
        path = self.out_dir / f"manifest-{command}.json"
        atomic_write(path, _json_bytes(manifest))
        return path


# --- configuration --------------------------------------------------------


def load_config(path: str | None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if path is None:
        return cfg
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    for section, values in doc.items():
        if section not in cfg or not isinstance(values, dict):
            raise ConfigError(f"unknown config section {section!r}")
        unknown = set(values) - set(cfg[section])
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
        cfg[section].update(values)
    return cfg


def effective_config(args) -> dict:
    cfg = load_config(getattr(args, "config", None))
    for flag, (section, key) in _CONFIG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[section][key] = value
    return cfg


def build_protocol_config(cfg: dict) -> tuple[ProtocolConfig, AdversaryModel]:
    p = cfg["protocol"]
    try:
        pc = ProtocolConfig(
            d=int(p["dim"]),
            N=int(p["parties"]),
            rounds=int(p["rounds"]),
            channel=ChannelModel(float(cfg["channel"]["fidelity"])),
            seed=int(p["seed"]),
            security_fraction=float(p["security_fraction"]),
            mean_photon_number=p["mean_photon_number"],
        )
        adv = AdversaryModel.parse(str(cfg["adversary"]["model"]))
        if adv.kind != "none":
            adv = AdversaryModel(adv.kind, adv.target, float(cfg["adversary"]["attack_probability"]))
        adv.validate(pc.N)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return pc, adv


# --- commands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = effective_config(args)
    pc, adversary = build_protocol_config(cfg)
    executor = ThreadPoolExecutor(args.workers) if args.workers and args.workers > 1 else None
    try:
        session = run_session(pc, adversary, executor=executor)
    except SubsetError as exc:
        raise SecurityFailure(str(exc)) from exc
    finally:
        if executor is not None:
            executor.shutdown()

    report = analysis_report(pc.d, pc.channel.fidelity, session, adversary)
    report["key_length"] = len(session.distributor_key)
    report["key_capacity_bits"] = len(session.distributor_key) * math.log2(pc.d)
    report["checked_rounds"] = len(session.checked_subset)
    report["mismatch_count"] = session.mismatch_count
    report["valid_fraction"] = sum(t.valid for t in session.transcripts) / len(session.transcripts)

    out = OutputSet(Path(args.out))
    out.add("transcript.json", session.dumps() + "\n")
    out.add("analysis.json", _json_bytes(report))
    out.commit("simulate", cfg, pc.seed)
    log.info("key length %d dits, empirical QBER %s, secure=%s",
             report["key_length"], report["qber_empirical"], report["secure"])

    if _security_failed(pc.d, session, report):
        raise SecurityFailure(
            f"security check failed: {session.mismatch_count} mismatches in "
            f"{len(session.checked_subset)} checked rounds"
        )
    return EXIT_OK


def _security_failed(d: int, session, report: dict) -> bool:
    try:
        threshold = security_threshold(d)
    except ValueError:
        return session.mismatch_count > 0
    check_rate = session.mismatch_count / len(session.checked_subset)
    return check_rate >= threshold or report["secure"] is False


def cmd_crosstalk(args) -> int:
    try:
        channel = ChannelModel(args.fidelity)
        rng = np.random.default_rng(args.seed)
        m = optics.crosstalk_matrix(args.dim, channel, args.trials or None, rng)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out_path = Path(args.out)
    out = OutputSet(out_path.parent)
    out.add(out_path.name, optics.matrix_to_csv(m, args.dim))
    config = {"dim": args.dim, "fidelity": args.fidelity, "trials": args.trials}
    out.commit("crosstalk", config, args.seed)
    log.info("mean same-basis fidelity %.6f", optics.same_basis_fidelity(m))
    return EXIT_OK


def cmd_visibility_scan(args) -> int:
    if args.steps < 2 or args.noise < 0:
        raise ConfigError("need --steps >= 2 and a non-negative --noise")
    scan = optics.theta_scan(args.steps, noise_floor=args.noise)
    v = optics.visibility(scan)
    lines = ["theta,p_c,p_d"] + [f"{t:.6f},{pc:.6f},{pd:.6f}" for t, pc, pd in scan]
    out_path = Path(args.out)
    out = OutputSet(out_path.parent)
    out.add(out_path.name, "\n".join(lines) + "\n")
    summary = {"visibility": v.tolist(), "fidelity": [optics.fidelity_from_visibility(x) for x in v]}
    out.add(out_path.stem + ".summary.json", _json_bytes(summary))
    out.commit("visibility-scan", {"steps": args.steps, "noise": args.noise}, None)
    log.info("visibility per port %s", np.round(v, 6).tolist())
    return EXIT_OK


def cmd_share(args) -> int:
    try:
        payload = Path(args.payload).read_bytes()
        doc = json.loads(Path(args.transcript).read_text())
        session = load_session(doc)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load inputs: {exc}") from exc
    d = session.config.d
    msg = secretshare.bytes_to_dits(payload, d)
    dist_key = secretshare.DitStream.from_key(session.distributor_key, d)
    part_key = secretshare.DitStream.from_key(session.participants_key, d)
    try:
        cipher = secretshare.encrypt(msg, dist_key)
        recovered = secretshare.decrypt(cipher, part_key)
    except secretshare.KeyTooShortError as exc:
        raise ConfigError(str(exc)) from exc

    fidelity = secretshare.reconstruction_fidelity(msg, recovered)
    try:
        recovered_bytes = secretshare.dits_to_bytes(recovered)
    except ValueError:
        # noisy keys can push a record above 255; keep the dits only
        recovered_bytes = b""
    out = OutputSet(Path(args.out))
    out.add("ciphertext.qss", secretshare.write_ciphertext(cipher))
    out.add("recovered.bin", recovered_bytes)
    out.add("fidelity.json", _json_bytes({
        "d": d,
        "payload_bytes": len(payload),
        "dits": len(msg),
        "dit_fidelity": fidelity,
        "bit_identical": recovered_bytes == payload,
    }))
    config = {"payload": Path(args.payload).name, "transcript": Path(args.transcript).name}
    out.commit("share", config, session.config.seed)
    log.info("dit fidelity %.6f", fidelity)
    return EXIT_OK


# --- argument parsing -----------------------------------------------------


def _add_protocol_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML/JSON config file; flags override its keys")
    p.add_argument("--dim", type=int)
    p.add_argument("--parties", type=int)
    p.add_argument("--rounds", type=int, help="number of key dits to generate")
    p.add_argument("--fidelity", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--security-fraction", type=float, dest="security_fraction")
    p.add_argument("--adversary", help="none, eve or dishonest:<n>")
    p.add_argument("--attack-probability", type=float, dest="attack_probability")
    p.add_argument("--mean-photon-number", type=float, dest="mean_photon_number",
                   help="recorded as metadata only")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qss-sim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a secret-sharing session")
    _add_protocol_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("crosstalk", help="MUB crosstalk matrix as CSV")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--fidelity", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=0, help="Monte-Carlo trials per cell; 0 = exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV file path")
    p.set_defaults(func=cmd_crosstalk)

    p = sub.add_parser("visibility-scan", help="d=2 interferometer response versus HWP angle")
    p.add_argument("--steps", type=int, default=91)
    p.add_argument("--noise", type=float, default=0.0, help="additive intensity floor")
    p.add_argument("--out", required=True, help="CSV file path")
    p.set_defaults(func=cmd_visibility_scan)

    p = sub.add_parser("share", help="encrypt a payload with session keys and recover it")
    p.add_argument("--payload", required=True)
    p.add_argument("--transcript", required=True, help="qss-transcript-v1 JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_share)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SecurityFailure as exc:
        print(f"security: {exc}", file=sys.stderr)
        return EXIT_INSECURE


if __name__ == "__main__":
    sys.exit(main())
