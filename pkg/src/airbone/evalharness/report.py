"""Experiment reports: machine-readable JSON plus a human-readable table."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass
class EvalReport:
    experiment_id: str
    feature_config: dict
    per_fold: list = field(default_factory=list)   # {fold, eer, threshold, ...}
    mean_eer: float | None = None
    mean_threshold: float | None = None
    asr: dict = field(default_factory=dict)        # per attack type
    runtime: dict = field(default_factory=dict)
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for row in self.per_fold:
            if not 0.0 <= row["eer"] <= 1.0:
                raise ValueError(f"fold EER {row['eer']} outside [0, 1]")
        for v in self.asr.values():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"ASR {v} outside [0, 1]")

    def finalize(self) -> "EvalReport":
        if self.per_fold:
            self.mean_eer = sum(r["eer"] for r in self.per_fold) / len(self.per_fold)
            self.mean_threshold = (sum(r["threshold"] for r in self.per_fold)
                                   / len(self.per_fold))
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "EvalReport":
        return cls(**json.loads(blob))

    def save(self, out_dir, stem: str | None = None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.experiment_id
        path = out / f"{stem}.json"
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        (out / f"{stem}.txt").write_text(self.table() + "\n", encoding="utf-8")
        return path

    def table(self) -> str:
        lines = [f"experiment: {self.experiment_id}",
                 f"streams:    {','.join(self.feature_config.get('streams', []))}"]
        if self.per_fold:
            lines.append(f"{'fold':>4}  {'EER':>7}  {'threshold':>9}")
            for r in self.per_fold:
                lines.append(f"{r['fold']:>4}  {r['eer']:7.4f}  "
                             f"{r['threshold']:9.4f}")
            lines.append(f"mean  {self.mean_eer:7.4f}  {self.mean_threshold:9.4f}")
        for name in sorted(self.asr):
            lines.append(f"ASR[{name}] = {self.asr[name]:.4f}")
        for key in sorted(self.extra):
            lines.append(f"{key} = {self.extra[key]}")
        return "\n".join(lines)


def dump_trials(path, rows) -> None:
    """One line per trial: target_user probe_user label similarity liveness."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("target_user\tprobe_user\tlabel\tsimilarity\tliveness\n")
        for r in rows:
            fh.write("\t".join(str(x) for x in r) + "\n")
