"""Bundle cache: extracted features keyed by (audio path, extract config).

Extraction is resumable: entries whose cache file parses and matches the
config fingerprint are skipped; corrupt files are re-extracted.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from airbone.audio_io import ChannelRole, UtteranceEntry, default_channel_map, \
    load_recording
from airbone.features.bundle import (
    BundleFormatError,
    ExtractConfig,
    FeatureBundle,
    extract_bundle,
    load_bundle,
    save_bundle,
)


class BundleCache:
    def __init__(self, cache_dir, config: ExtractConfig,
                 channel_map: list[ChannelRole] | None = None):
        self.cache_dir = Path(cache_dir)
        self.config = config
        self.channel_map = channel_map or default_channel_map()

    def path_for(self, entry: UtteranceEntry) -> Path:
        key = f"{entry.path}|{self.config.fingerprint()}"
        digest = hashlib.sha1(key.encode()).hexdigest()[:20]
        return self.cache_dir / f"{digest}.abf"

    def is_valid(self, entry: UtteranceEntry) -> bool:
        path = self.path_for(entry)
        if not path.exists():
            return False
        try:
            b = load_bundle(path)
        except BundleFormatError:
            return False
        return b.config_fingerprint == self.config.fingerprint()

    def extract_one(self, entry: UtteranceEntry) -> Path:
        rec = load_recording(entry.path, self.channel_map)
        bundle = extract_bundle(rec, self.config, meta=entry)
        out = self.path_for(entry)
        save_bundle(bundle, out)
        return out

    def get(self, entry: UtteranceEntry) -> FeatureBundle:
        path = self.path_for(entry)
        if not path.exists():
            raise FileNotFoundError(
                f"no cached bundle for {entry.path}; run extraction first")
        return load_bundle(path)

    def extract_all(self, entries, jobs: int = 1, refresh: bool = False):
        """Extract missing/corrupt bundles; returns (n_done, n_skipped, errors)."""
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        todo = [e for e in entries if refresh or not self.is_valid(e)]
        skipped = len(entries) - len(todo)
        errors = []
        if jobs <= 1 or len(todo) <= 1:
            for e in todo:
                try:
                    self.extract_one(e)
                except Exception as exc:  # noqa: BLE001 - collected per file
                    errors.append((e.path, str(exc)))
        else:
            with ProcessPoolExecutor(max_workers=jobs,
                                     initializer=_limit_threads) as pool:
                futures = {pool.submit(_extract_worker, self.cache_dir,
                                       self.config, self.channel_map, e): e
                           for e in todo}
                for fut, e in futures.items():
                    try:
                        fut.result()
                    except Exception as exc:  # noqa: BLE001
                        errors.append((e.path, str(exc)))
        return len(todo) - len(errors), skipped, errors


def _limit_threads():
    os.environ["OMP_NUM_THREADS"] = "1"
    os.environ["OPENBLAS_NUM_THREADS"] = "1"


def _extract_worker(cache_dir, config, channel_map, entry):
    BundleCache(cache_dir, config, channel_map).extract_one(entry)
