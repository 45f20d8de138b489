"""On-disk form of prepared splits: one container per part plus JSON sidecars."""
import json
from pathlib import Path

import numpy as np

from intentforge import container
from intentforge.data.features import FeatureMatrix, FeatureSchema
from intentforge.data.split import PARTS, DatasetSplit
from intentforge.errors import IncompatibleArtifactsError

MATRIX_MAGIC = b"IFFM"


def save_matrix(path, fm: FeatureMatrix):
    header = {
        "kind": "feature_matrix",
        "mode": fm.mode,
        "schema_digest": fm.schema_digest,
        "session_ids": list(fm.session_ids),
        "user_ids": list(fm.user_ids),
    }
    tensors = {"values": fm.values, "offsets": fm.offsets, "labels": fm.labels}
    container.write(path, MATRIX_MAGIC, header, tensors)


def load_matrix(path) -> FeatureMatrix:
    header, t = container.read(path, MATRIX_MAGIC)
    return FeatureMatrix(
        values=t["values"],
        offsets=t["offsets"].astype(np.int64),
        labels=t["labels"],
        session_ids=header["session_ids"],
        user_ids=header["user_ids"],
        mode=header["mode"],
        schema_digest=header["schema_digest"],
    )


def _dump_json(path, obj):
    container.atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def save_split(directory, split: DatasetSplit):
    """Writes ``{train,validation,test}.iffm``, ``schema.json``, ``split.json`` and ``report.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, fm in split.parts().items():
        save_matrix(d / f"{name}.iffm", fm)
    _dump_json(d / "schema.json", split.schema.to_dict())
    _dump_json(d / "split.json", {
        "fractions": list(split.fractions),
        "seed": split.seed,
        "schema_digest": split.schema.digest,
        "sizes": {k: len(v) for k, v in split.parts().items()},
    })
    _dump_json(d / "report.json", split.report)


def load_schema(path) -> FeatureSchema:
    return FeatureSchema.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_split(directory) -> DatasetSplit:
    d = Path(directory)
    schema = load_schema(d / "schema.json")
    meta = json.loads((d / "split.json").read_text(encoding="utf-8"))
    report_path = d / "report.json"
    report = json.loads(report_path.read_text(encoding="utf-8")) if report_path.exists() else {}
    parts = {name: load_matrix(d / f"{name}.iffm") for name in PARTS}
    for name, fm in parts.items():
        if fm.schema_digest != schema.digest:
            raise IncompatibleArtifactsError(f"{name} part was built with a different schema")
    return DatasetSplit(
        parts["train"], parts["validation"], parts["test"], schema=schema,
        fractions=tuple(meta["fractions"]), seed=meta["seed"], report=report,
    )
