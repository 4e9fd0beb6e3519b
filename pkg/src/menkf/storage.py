"""File formats: CSV datasets, JSON documents, manifests, checkpoints.

Everything written here is deterministic for identical inputs — floats
are serialized with repr (shortest round-trip), JSON keys are sorted,
and no timestamps or absolute paths are embedded — so byte-for-byte
comparison of outputs is a meaningful reproducibility check.

Checkpoint binary layout (little-endian):

    bytes 0..7    magic b"MENKFCKP"
    u32           format version (currently 1)
    u64           header length in bytes
    header        UTF-8 JSON: config, n_members, dim, dtype ("<f8"),
                  config_sha256
    body          n_members * dim float64 values, row-major

The body round-trips bitwise; loading re-hashes the embedded config and
refuses a checkpoint whose header was edited.
"""

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arms import ArmSpec
from .enkf import Ensemble
from .exceptions import ConfigError, DataFormatError, InvalidInputError
from .simgen import Replicate
from .trainer import MenkfConfig

_MAGIC = b"MENKFCKP"
_VERSION = 1


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from err


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- datasets

@dataclass
class LoadedDataset:
    """In-memory form of a dataset CSV; optional columns may be None."""

    v_f: np.ndarray
    v_g: np.ndarray
    target_logits: np.ndarray
    true_prob: np.ndarray | None
    labels: np.ndarray | None

    @property
    def size(self) -> int:
        return self.target_logits.shape[0]

    def to_replicate(self) -> Replicate:
        if self.true_prob is None or self.labels is None:
            raise DataFormatError("dataset lacks true_prob/label columns")
        return Replicate(self.v_f, self.v_g, self.labels,
                         self.target_logits, self.true_prob)


def dataset_header(p: int, q: int, with_truth: bool = True) -> list[str]:
    cols = [f"emb_f_{i}" for i in range(p)] + [f"emb_g_{i}" for i in range(q)]
    cols.append("target_logit")
    if with_truth:
        cols += ["true_prob", "label"]
    return cols


def write_dataset_csv(path, rep: Replicate) -> None:
    p, q = rep.v_f.shape[1], rep.v_g.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset_header(p, q))
        for i in range(rep.size):
            row = [_fmt(x) for x in rep.v_f[i]]
            row += [_fmt(x) for x in rep.v_g[i]]
            row.append(_fmt(rep.target_logits[i]))
            row.append(_fmt(rep.true_prob[i]))
            row.append(str(int(rep.labels[i])))
            writer.writerow(row)


def _block_columns(header: list[str], prefix: str, path) -> list[int]:
    # contiguous numbering 0..k-1 is required; anything else is malformed
    found = {}
    for idx, name in enumerate(header):
        if name.startswith(prefix):
            try:
                found[int(name[len(prefix):])] = idx
            except ValueError as err:
                raise DataFormatError(f"{path}: bad column name {name!r}") from err
    if not found:
        raise DataFormatError(f"{path}: no {prefix}* columns found")
    if sorted(found) != list(range(len(found))):
        raise DataFormatError(f"{path}: {prefix}* columns are not contiguous from 0")
    return [found[i] for i in range(len(found))]


def read_dataset_csv(path) -> LoadedDataset:
    """Parse a dataset CSV; errors name the row and column at fault."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    f_cols = _block_columns(header, "emb_f_", path)
    g_cols = _block_columns(header, "emb_g_", path)
    if "target_logit" not in header:
        raise DataFormatError(f"{path}: missing target_logit column")
    named = {name: idx for idx, name in enumerate(header)}

    def parse(row_num, row, col_idx, as_int=False):
        if col_idx >= len(row):
            raise DataFormatError(f"{path}: row {row_num} has only {len(row)} fields")
        text = row[col_idx]
        try:
            return int(text) if as_int else float(text)
        except ValueError:
            kind = "integer" if as_int else "number"
            raise DataFormatError(
                f"{path}: row {row_num}, column {header[col_idx]!r}: "
                f"{text!r} is not a {kind}") from None

    n = len(rows)
    v_f = np.empty((n, len(f_cols)))
    v_g = np.empty((n, len(g_cols)))
    target = np.empty(n)
    true_prob = np.empty(n) if "true_prob" in named else None
    labels = np.empty(n, dtype=np.int64) if "label" in named else None
    for i, row in enumerate(rows):
        row_num = i + 2  # 1-based, counting the header line
        if len(row) != len(header):
            raise DataFormatError(
                f"{path}: row {row_num} has {len(row)} fields, expected {len(header)}")
        for j, c in enumerate(f_cols):
            v_f[i, j] = parse(row_num, row, c)
        for j, c in enumerate(g_cols):
            v_g[i, j] = parse(row_num, row, c)
        target[i] = parse(row_num, row, named["target_logit"])
        if true_prob is not None:
            true_prob[i] = parse(row_num, row, named["true_prob"])
        if labels is not None:
            labels[i] = parse(row_num, row, named["label"], as_int=True)
    return LoadedDataset(v_f, v_g, target, true_prob, labels)


# ------------------------------------------------------------- trainer cfg

def config_to_dict(cfg: MenkfConfig) -> dict:
    return {
        "arm_f": {"input_dim": cfg.arm_f.input_dim,
                  "hidden_dims": list(cfg.arm_f.hidden_dims),
                  "activation": cfg.arm_f.activation},
        "arm_g": {"input_dim": cfg.arm_g.input_dim,
                  "hidden_dims": list(cfg.arm_g.hidden_dims),
                  "activation": cfg.arm_g.activation},
        "ensemble_size": cfg.ensemble_size,
        "init_var": cfg.init_var,
        "batch_size": cfg.batch_size,
        "passes_over_data": cfg.passes_over_data,
        "jitter_var": cfg.jitter_var,
        "variance_init": cfg.variance_init,
        "seed": cfg.seed,
        "shuffle_batches": cfg.shuffle_batches,
        "fixed_arm_logit": cfg.fixed_arm_logit,
        "fixed_noise_var": cfg.fixed_noise_var,
    }


def _check_keys(d: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _arm_from_dict(d: dict, where: str) -> ArmSpec:
    _check_keys(d, {"input_dim", "hidden_dims", "activation"}, where)
    try:
        return ArmSpec(input_dim=int(d["input_dim"]),
                       hidden_dims=tuple(d.get("hidden_dims", (16,))),
                       activation=str(d.get("activation", "tanh")))
    except KeyError as err:
        raise ConfigError(f"{where}: missing key {err}") from err


def config_from_dict(d: dict) -> MenkfConfig:
    allowed = {"arm_f", "arm_g", "ensemble_size", "init_var", "batch_size",
               "passes_over_data", "jitter_var", "variance_init", "seed",
               "shuffle_batches", "fixed_arm_logit", "fixed_noise_var"}
    _check_keys(d, allowed, "trainer config")
    if "arm_f" not in d or "arm_g" not in d:
        raise ConfigError("trainer config: arm_f and arm_g are required")
    kwargs = {key: d[key] for key in allowed - {"arm_f", "arm_g"} if key in d}
    try:
        return MenkfConfig(arm_f=_arm_from_dict(d["arm_f"], "arm_f"),
                           arm_g=_arm_from_dict(d["arm_g"], "arm_g"),
                           **kwargs)
    except (InvalidInputError, TypeError) as err:
        raise ConfigError(f"trainer config: {err}") from err


def _config_hash(cfg_dict: dict) -> str:
    canon = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# -------------------------------------------------------------- checkpoint

def save_checkpoint(path, ensemble: Ensemble, cfg: MenkfConfig) -> None:
    cfg_dict = config_to_dict(cfg)
    header = {
        "config": cfg_dict,
        "config_sha256": _config_hash(cfg_dict),
        "n_members": ensemble.size,
        "dim": ensemble.dim,
        "dtype": "<f8",
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    body = np.ascontiguousarray(ensemble.members, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(body)


def load_checkpoint(path) -> tuple[Ensemble, MenkfConfig]:
    raw = Path(path).read_bytes()
    if len(raw) < len(_MAGIC) + 12 or raw[:len(_MAGIC)] != _MAGIC:
        raise DataFormatError(f"{path}: not a checkpoint file")
    offset = len(_MAGIC)
    (version,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if version != _VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    if offset + header_len > len(raw):
        raise DataFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[offset:offset + header_len].decode())
    except (json.JSONDecodeError, UnicodeDecodeError) as err:
        raise DataFormatError(f"{path}: corrupt header ({err})") from err
    offset += header_len
    if header.get("dtype") != "<f8":
        raise DataFormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    if header.get("config_sha256") != _config_hash(header.get("config", {})):
        raise DataFormatError(f"{path}: config hash mismatch")
    n, d = int(header["n_members"]), int(header["dim"])
    expected = n * d * 8
    body = raw[offset:]
    if len(body) != expected:
        raise DataFormatError(f"{path}: body is {len(body)} bytes, expected {expected}")
    members = np.frombuffer(body, dtype="<f8").reshape(n, d).copy()
    cfg = config_from_dict(header["config"])
    if cfg.layout().dim != d:
        raise DataFormatError(f"{path}: config layout dim {cfg.layout().dim} != stored dim {d}")
    return Ensemble(members), cfg


# --------------------------------------------------------------- manifests

def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, seed: int, scenario: str, files: dict) -> None:
    """files maps manifest-relative names to on-disk paths to checksum."""
    manifest = {
        "seed": seed,
        "scenario": scenario,
        "files": {name: sha256_file(p) for name, p in sorted(files.items())},
    }
    write_json(path, manifest)


def verify_manifest(path) -> list[str]:
    """Names of manifest entries whose checksum no longer matches."""
    manifest = read_json(path)
    base = Path(path).parent
    bad = []
    for name, digest in manifest.get("files", {}).items():
        target = base / name
        if not target.exists() or sha256_file(target) != digest:
            bad.append(name)
    return bad


# ------------------------------------------------------------- flat tables

def write_rows_csv(path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            out = []
            for col in columns:
                value = row[col]
                out.append(str(value) if isinstance(value, (int, np.integer))
                           else _fmt(value))
            writer.writerow(out)
