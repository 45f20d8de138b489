"""Checkpoint files (magic ``IFCK``): model or logistic-regression weights plus
everything needed to use them, including the full feature schema."""
from dataclasses import asdict
from pathlib import Path

from intentforge import container
from intentforge.baselines import LogRegParams
from intentforge.data.features import FeatureSchema
from intentforge.engine import ModelParams
from intentforge.errors import FormatError
from intentforge.trainer import Checkpoint, TrainConfig

CHECKPOINT_MAGIC = b"IFCK"


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = {
        "kind": "model",
        "schema_digest": ckpt.schema_digest,
        "schema": ckpt.schema,
        "config": asdict(ckpt.config),
        "best_epoch": ckpt.best_epoch,
        "val_loss": ckpt.val_loss,
        "dropout_rate": ckpt.params.dropout_rate,
        "batchnorm": {k: list(v) for k, v in ckpt.params.batchnorm_settings().items()},
    }
    return container.encode(CHECKPOINT_MAGIC, header, ckpt.params.arrays())


def encode_logreg(params: LogRegParams, schema=None, options=None) -> bytes:
    header = {"kind": "logreg", "schema_digest": params.schema_digest, "schema": schema, "options": options or {}}
    return container.encode(CHECKPOINT_MAGIC, header, {"w": params.w, "b": [params.b]})


def save_checkpoint(path, artifact, schema=None, options=None):
    """Atomically write a :class:`Checkpoint` or :class:`LogRegParams`."""
    if isinstance(artifact, LogRegParams):
        data = encode_logreg(artifact, schema, options)
    else:
        data = encode_checkpoint(artifact)
    container.atomic_write(path, data)


def _schema(header):
    raw = header.get("schema")
    if raw is None:
        return None
    schema = FeatureSchema.from_dict(raw)
    if schema.digest != header["schema_digest"]:
        raise FormatError("embedded schema does not match the recorded schema digest")
    return schema


def decode_checkpoint(data: bytes):
    """Returns a :class:`Checkpoint` or :class:`LogRegParams` depending on the stored kind."""
    header, tensors = container.decode(data, CHECKPOINT_MAGIC)
    _schema(header)
    kind = header.get("kind")
    if kind == "logreg":
        return LogRegParams(tensors["w"], tensors["b"][0], header["schema_digest"])
    if kind != "model":
        raise FormatError(f"unknown checkpoint kind {kind!r}")
    params = ModelParams.from_arrays(
        tensors, header["dropout_rate"], {k: tuple(v) for k, v in header["batchnorm"].items()})
    return Checkpoint(
        params=params,
        schema_digest=header["schema_digest"],
        config=TrainConfig(**header["config"]),
        best_epoch=header["best_epoch"],
        val_loss=header["val_loss"],
        schema=header.get("schema"),
    )


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())


def checkpoint_schema(path) -> FeatureSchema:
    header, _ = container.read(path, CHECKPOINT_MAGIC)
    schema = _schema(header)
    if schema is None:
        raise FormatError(f"{path} carries no feature schema")
    return schema
