"""Monte Carlo basin areas.

Initial condition ``i`` of a run is drawn from its own counter-based stream
keyed by ``(seed, i)``, so a run is a pure function of its seed regardless of
worker count or processing order. Completed classifications can be appended
to a checkpoint file and a run resumed from it.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .classify import (
    ClassifierConfig, Origin, Resonance, ResonanceLabel, Unclassified, classify_packed,
    cluster_variants, label_name,
)
from .errors import FingerprintMismatch
from .integrate import IntegratorConfig
from .models import MODEL_SPINORBIT, ModelParams, make_schedule

log = logging.getLogger(__name__)

CODE_ORIGIN, CODE_RESONANCE, CODE_UNCLASSIFIED = 0, 1, 2
Z95 = 1.96


@dataclass(frozen=True)
class SamplingDomain:
    q_lo: float
    q_hi: float
    v_lo: float
    v_hi: float

    def __post_init__(self):
        if not self.q_lo < self.q_hi:
            raise ValueError("need q_lo < q_hi")
        if not self.v_lo < self.v_hi:
            raise ValueError("need v_lo < v_hi")

    def to_dict(self) -> dict:
        return {"q_lo": self.q_lo, "q_hi": self.q_hi, "v_lo": self.v_lo, "v_hi": self.v_hi}


CUBIC_DOMAIN = SamplingDomain(-1.0, 1.0, -1.0, 1.0)
SPINORBIT_DOMAIN = SamplingDomain(0.0, 2.0 * math.pi, 0.0, 4.0)


def default_domain(params: ModelParams) -> SamplingDomain:
    return SPINORBIT_DOMAIN if params.model == MODEL_SPINORBIT else CUBIC_DOMAIN


# ---------------------------------------------------------------------------
# initial conditions


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return seed


def sample_ic(domain: SamplingDomain, seed: int, index: int) -> tuple[float, float]:
    """Initial condition ``index`` of the run with this seed."""
    if not 0 <= index < 2**64:
        raise ValueError("index out of range")
    gen = np.random.Generator(np.random.Philox(key=(int(index) << 64) | _check_seed(seed)))
    u = gen.random(2)
    return (domain.q_lo + (domain.q_hi - domain.q_lo) * u[0],
            domain.v_lo + (domain.v_hi - domain.v_lo) * u[1])


def sample_ics(domain: SamplingDomain, n: int, seed: int,
               indices: Optional[Iterable[int]] = None) -> np.ndarray:
    """Array of shape (n, 2); row i depends only on (domain, seed, i)."""
    if indices is None:
        if n < 1:
            raise ValueError("n must be >= 1")
        indices = range(n)
    return np.array([sample_ic(domain, seed, i) for i in indices], dtype=np.float64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# run description


@dataclass(frozen=True)
class RunSpec:
    params: ModelParams
    domain: SamplingDomain
    n: int
    seed: int
    classifier: ClassifierConfig = ClassifierConfig()
    integrator: IntegratorConfig = IntegratorConfig()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        _check_seed(self.seed)

    def fingerprint(self) -> str:
        """Hash of everything that affects a label except the seed and n."""
        payload = {
            "params": self.params.fingerprint_fields(),
            "domain": self.domain.to_dict(),
            "classifier": self.classifier.to_dict(),
            "integrator": self.integrator.to_dict(),
        }
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True)
class Record:
    index: int
    code: int
    p: int = 0
    q: int = 0
    variant: int = 0
    rep_q: float = 0.0
    rep_v: float = 0.0

    @property
    def label(self) -> ResonanceLabel:
        if self.code == CODE_ORIGIN:
            return Origin()
        if self.code == CODE_RESONANCE:
            return Resonance(self.p, self.q, self.variant)
        return Unclassified()

    def to_line(self) -> str:
        return f"{self.index},{self.code},{self.p},{self.q},{self.variant},{self.rep_q!r},{self.rep_v!r}"

    @classmethod
    def from_line(cls, line: str) -> "Record":
        parts = line.strip().split(",")
        if len(parts) != 7:
            raise ValueError("wrong field count")
        rec = cls(int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]), int(parts[4]),
                  float(parts[5]), float(parts[6]))
        if rec.code not in (CODE_ORIGIN, CODE_RESONANCE, CODE_UNCLASSIFIED) or rec.index < 0:
            raise ValueError("bad record")
        return rec


def _classify_index(spec: RunSpec, par: np.ndarray, index: int) -> Record:
    q0, v0 = sample_ic(spec.domain, spec.seed, index)
    try:
        label, rep = classify_packed(spec.params.model, par, spec.params.schedule, q0, v0, 0.0,
                                     spec.classifier, spec.integrator)
    except Exception as exc:  # never drop an IC
        log.warning("IC %d failed: %s", index, exc)
        label, rep = Unclassified(str(exc)), None
    if isinstance(label, Origin):
        return Record(index, CODE_ORIGIN)
    if isinstance(label, Resonance):
        return Record(index, CODE_RESONANCE, label.p, label.q, 0, float(rep[0]), float(rep[1]))
    return Record(index, CODE_UNCLASSIFIED)


def _classify_chunk(spec: RunSpec, indices: Sequence[int]) -> list[Record]:
    par = spec.params.pack()
    return [_classify_index(spec, par, i) for i in indices]


def default_workers() -> int:
    env = os.environ.get("BASINFORGE_WORKERS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("BASINFORGE_WORKERS must be >= 1")
        return n
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# checkpoints


def _header(spec: RunSpec) -> str:
    return f"#seed={spec.seed} fingerprint={spec.fingerprint()} n={spec.n}\n"


def _parse_header(line: str) -> dict:
    if not line.startswith("#"):
        raise ValueError("missing checkpoint header")
    fields = dict(tok.split("=", 1) for tok in line[1:].split())
    return {"seed": int(fields["seed"]), "fingerprint": fields["fingerprint"], "n": int(fields["n"])}


def checkpoint_load(path: str | Path, spec: Optional[RunSpec] = None) -> tuple[dict, dict[int, Record]]:
    """Read a checkpoint. A torn trailing record is dropped with a warning and
    truncated from the file; a header that does not match ``spec`` raises
    :class:`FingerprintMismatch`."""
    path = Path(path)
    raw = path.read_bytes()
    text = raw.decode("utf-8", errors="replace")
    lines = text.splitlines(keepends=True)
    if not lines:
        raise ValueError(f"{path}: empty checkpoint")
    header = _parse_header(lines[0])
    if spec is not None:
        for key, want in (("fingerprint", spec.fingerprint()), ("seed", spec.seed), ("n", spec.n)):
            if header[key] != want:
                raise FingerprintMismatch(f"{path}: checkpoint {key} {header[key]} != {want}")
    records: dict[int, Record] = {}
    good_bytes = len(lines[0].encode())
    for k, line in enumerate(lines[1:], start=1):
        complete = line.endswith("\n")
        try:
            if not complete:
                raise ValueError("unterminated record")
            rec = Record.from_line(line)
        except ValueError:
            if k == len(lines) - 1:
                warnings.warn(f"{path}: dropping torn trailing record {line.strip()!r}")
                with open(path, "r+b") as fh:
                    fh.truncate(good_bytes)
                break
            raise ValueError(f"{path}: corrupt record on line {k + 1}")
        records[rec.index] = rec
        good_bytes += len(line.encode())
    return header, records


class CheckpointWriter:
    """Append-only sink, one line per completed IC."""

    def __init__(self, path: str | Path, spec: RunSpec, fresh: bool):
        self.path = Path(path)
        if fresh or not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(_header(spec))
        self._fh = open(self.path, "a")

    def write(self, records: Iterable[Record]) -> None:
        for rec in records:
            self._fh.write(rec.to_line() + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def checkpoint_save(path: str | Path, spec: RunSpec, records: Iterable[Record]) -> None:
    with CheckpointWriter(path, spec, fresh=True) as w:
        w.write(sorted(records, key=lambda r: r.index))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class LabelArea:
    label: str
    p: int
    q: int
    variant: int
    count: int
    area_pct: float
    ci_half_pct: float


def binomial_half_width(count: int, n: int) -> float:
    """95% normal-approximation half-width of count/n, in percent."""
    p = count / n
    return Z95 * math.sqrt(p * (1.0 - p) / n) * 100.0


@dataclass
class BasinReport:
    spec: RunSpec
    entries: list[LabelArea]
    records: list[Record]
    n_total: int
    n_unclassified: int
    wall_time: float
    flagged: list[tuple[int, int]] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.spec.seed

    @property
    def fingerprint(self) -> str:
        return self.spec.fingerprint()

    def area(self, label: str) -> float:
        """Percentage for a label name; 0 for labels that never occurred."""
        for e in self.entries:
            if e.label == label:
                return e.area_pct
        return 0.0

    def ci(self, label: str) -> float:
        for e in self.entries:
            if e.label == label:
                return e.ci_half_pct
        return binomial_half_width(0, self.n_total)

    def areas(self) -> dict[str, float]:
        return {e.label: e.area_pct for e in self.entries}

    def labels(self) -> list[str]:
        """Label name of every IC, in index order."""
        names = _names_by_key(self.entries)
        return [names[_key(r)] for r in self.records]

    def ics(self) -> np.ndarray:
        return sample_ics(self.spec.domain, self.spec.n, self.spec.seed)


def _key(rec: Record) -> tuple:
    return (rec.code, rec.p, rec.q, rec.variant)


def _names_by_key(entries: list[LabelArea]) -> dict:
    out = {}
    for e in entries:
        code = {"origin": CODE_ORIGIN, "unclassified": CODE_UNCLASSIFIED}.get(e.label, CODE_RESONANCE)
        out[(code, e.p, e.q, e.variant)] = e.label
    return out


def _sort_key(rec_key: tuple) -> tuple:
    code, p, q, variant = rec_key
    # origin first, resonances by decreasing frequency then variant, unclassified last
    if code == CODE_ORIGIN:
        return (0, 0.0, 0)
    if code == CODE_UNCLASSIFIED:
        return (2, 0.0, 0)
    return (1, -p / q, variant)


def build_report(spec: RunSpec, records: Sequence[Record], wall_time: float = 0.0) -> BasinReport:
    """Cluster variants and aggregate counts for a complete set of records."""
    records = sorted(records, key=lambda r: r.index)
    if [r.index for r in records] != list(range(spec.n)):
        raise ValueError("records do not cover indices 0..n-1 exactly")
    pairs = [(r.label, (r.rep_q, r.rep_v)) for r in records]
    relabeled, flagged = cluster_variants(
        pairs, spec.classifier.variant_cluster_radius, spec.params.model == MODEL_SPINORBIT)
    final = []
    for r, lab in zip(records, relabeled):
        if isinstance(lab, Resonance):
            r = Record(r.index, r.code, lab.p, lab.q, lab.variant, r.rep_q, r.rep_v)
        final.append(r)
    counts: dict[tuple, int] = {}
    for r in final:
        counts[_key(r)] = counts.get(_key(r), 0) + 1
    n_variants: dict[tuple, int] = {}
    for code, p, q, v in counts:
        if code == CODE_RESONANCE:
            n_variants[(p, q)] = n_variants.get((p, q), 0) + 1
    entries = []
    for key in sorted(counts, key=_sort_key):
        code, p, q, v = key
        if code == CODE_ORIGIN:
            name = "origin"
        elif code == CODE_UNCLASSIFIED:
            name = "unclassified"
        else:
            name = label_name(Resonance(p, q, v), n_variants[(p, q)])
        c = counts[key]
        entries.append(LabelArea(name, p, q, v, c, 100.0 * c / spec.n,
                                 binomial_half_width(c, spec.n)))
    for key in sorted(flagged):
        log.warning("%d:%d has more than four variants; review the clustering", *key)
    return BasinReport(spec, entries, final, spec.n, counts.get((CODE_UNCLASSIFIED, 0, 0, 0), 0),
                       wall_time, sorted(flagged))


def estimate_basins(
    params: ModelParams,
    domain: Optional[SamplingDomain],
    n: int,
    seed: int,
    classifier: ClassifierConfig = ClassifierConfig(),
    integrator: IntegratorConfig = IntegratorConfig(),
    workers: Optional[int] = None,
    checkpoint: Optional[str | Path] = None,
    resume: bool = False,
    chunk: int = 64,
) -> BasinReport:
    """Classify n seeded ICs and aggregate relative basin areas.

    With ``checkpoint`` set, each completed IC is appended to that file in
    index order; ``resume=True`` skips indices already recorded there.
    """
    spec = RunSpec(params, domain or default_domain(params), n, seed, classifier, integrator)
    return run_spec(spec, workers, checkpoint, resume, chunk)


def run_spec(spec: RunSpec, workers: Optional[int] = None, checkpoint=None, resume=False,
             chunk: int = 64) -> BasinReport:
    start = time.perf_counter()
    done: dict[int, Record] = {}
    if checkpoint is not None and resume and Path(checkpoint).exists():
        _, done = checkpoint_load(checkpoint, spec)
        done = {i: r for i, r in done.items() if i < spec.n}
    todo = [i for i in range(spec.n) if i not in done]
    chunks = [todo[k:k + chunk] for k in range(0, len(todo), chunk)]
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ValueError("workers must be >= 1")
    writer = CheckpointWriter(checkpoint, spec, fresh=not resume) if checkpoint is not None else None
    try:
        if workers == 1 or len(chunks) <= 1:
            results = (_classify_chunk(spec, c) for c in chunks)
            for recs in results:
                _collect(recs, done, writer)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                # map yields in submission order, so the checkpoint stays sorted
                for recs in pool.map(_classify_chunk, [spec] * len(chunks), chunks):
                    _collect(recs, done, writer)
    finally:
        if writer is not None:
            writer.close()
    return build_report(spec, list(done.values()), time.perf_counter() - start)


def _collect(recs, done, writer):
    for r in recs:
        done[r.index] = r
    if writer is not None:
        writer.write(recs)


def ramp_sweep(
    params: ModelParams,
    domain: Optional[SamplingDomain],
    n: int,
    seed: int,
    family: str,
    deltas: Sequence[float],
    classifier: ClassifierConfig = ClassifierConfig(),
    integrator: IntegratorConfig = IntegratorConfig(),
    workers: Optional[int] = None,
) -> list[BasinReport]:
    """One report per ramp product delta, all on the same IC stream."""
    if len(deltas) == 0:
        raise ValueError("delta list is empty")
    g0 = params.schedule.gamma0
    out = []
    for d in deltas:
        p = params.with_schedule(make_schedule(family, g0, d))
        out.append(estimate_basins(p, domain, n, seed, classifier, integrator, workers))
    return out


@dataclass(frozen=True)
class BasinDiff:
    gained: np.ndarray  # ICs with the target label in b only
    lost: np.ndarray  # ICs with the target label in a only
    common: np.ndarray  # ICs with the target label in both


def basin_diff(report_a: BasinReport, report_b: BasinReport, target: str) -> BasinDiff:
    """Per-IC membership change of ``target`` between two paired runs."""
    sa, sb = report_a.spec, report_b.spec
    if sa.seed != sb.seed or sa.n != sb.n or sa.domain != sb.domain:
        raise ValueError("runs do not share an IC stream (seed, n and domain must match)")
    ics = report_a.ics()
    in_a = np.array([lab == target for lab in report_a.labels()], dtype=bool)
    in_b = np.array([lab == target for lab in report_b.labels()], dtype=bool)
    return BasinDiff(ics[in_b & ~in_a], ics[in_a & ~in_b], ics[in_a & in_b])


# ---------------------------------------------------------------------------
# output files

REPORT_COLUMNS = ["label", "p", "q", "variant", "count", "area_pct", "ci_half_pct",
                  "area_pct_exact", "ci_half_pct_exact"]


def write_report_csv(report: BasinReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for e in report.entries:
            w.writerow([e.label, e.p, e.q, e.variant, e.count, f"{e.area_pct:.1f}",
                        f"{e.ci_half_pct:.1f}", repr(e.area_pct), repr(e.ci_half_pct)])


def read_report_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_report_json(report: BasinReport, path: str | Path) -> None:
    spec = report.spec
    meta = {
        "seed": spec.seed,
        "n": spec.n,
        "fingerprint": report.fingerprint,
        "params": spec.params.fingerprint_fields(),
        "domain": spec.domain.to_dict(),
        "classifier": spec.classifier.to_dict(),
        "integrator": spec.integrator.to_dict(),
        "n_unclassified": report.n_unclassified,
        "flagged": [f"{p}:{q}" for p, q in report.flagged],
        "wall_time_s": report.wall_time,
    }
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_labels_csv(report: BasinReport, path: str | Path) -> None:
    """Per-IC labels in index order."""
    ics = report.ics()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "q0", "v0", "label"])
        for r, name, (q0, v0) in zip(report.records, report.labels(), ics):
            w.writerow([r.index, repr(float(q0)), repr(float(v0)), name])


def report_from_checkpoint(path: str | Path, spec: RunSpec) -> BasinReport:
    _, records = checkpoint_load(path, spec)
    return build_report(spec, list(records.values()))
