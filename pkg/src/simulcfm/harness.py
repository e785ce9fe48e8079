"""Experiment driver: single runs, paired CFM ablations, parameter sweeps and
re-scoring of persisted run logs."""
from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import __version__
from .beam import BeamConfig
from .cfm import CfmConfig
from .core import EmissionEvent
from .engine import CLOCKS, translate
from .metrics import LatencyRecord, bootstrap_ci, corpus_bleu, laal, mean
from .policies import POLICY_KINDS, PolicyConfig, PolicyConfigError
from .synthetic import CorpusError, SyntheticModel, TaskSpec, Utterance, read_corpus

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("policy", "param", "chunk_ms", "cfm", "bleu", "bleu_ci_low", "bleu_ci_high",
                   "laal_ideal", "laal_ca", "stall_rate", "clock")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 1)."""


class InputError(ValueError):
    """Unreadable dataset or run log (CLI exit code 2)."""


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _opt_int(value):
    return None if value in (None, "", "none", "None") else int(value)


# flat key -> parser; the same names are used by config files, --set flags,
# sweep grids and log headers
FLAT_KEYS = {
    "policy": str,
    "f": int,
    "alpha": float,
    "lam": int,
    "n": int,
    "beam_size": int,
    "max_new_tokens": _opt_int,
    "length_norm_alpha": float,
    "cfm": _bool,
    "beta": float,
    "feedback_floor": float,
    "persist_contrast": _bool,
    "chunk_ms": int,
    "dataset": str,
    "seed": int,
    "workers": int,
    "clock": str,
    "resamples": int,
    "ci_level": float,
}
POLICY_KEYS = ("f", "alpha", "lam", "n")


@dataclass(frozen=True)
class RunConfig:
    policy: PolicyConfig
    beam: BeamConfig = BeamConfig()
    cfm: CfmConfig = CfmConfig()
    chunk_ms: int = 1000
    dataset_path: str = ""
    seed: int = 0
    workers: int = 1
    clock: str = "ideal"
    resamples: int = 1000
    ci_level: float = 0.95

    def __post_init__(self):
        if self.chunk_ms <= 0:
            raise ConfigError("chunk_ms must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.clock not in CLOCKS:
            raise ConfigError(f"clock must be one of {CLOCKS}")

    @classmethod
    def from_flat(cls, values: Dict[str, object]) -> "RunConfig":
        unknown = sorted(set(values) - set(FLAT_KEYS))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            v = {k: FLAT_KEYS[k](x) if x is not None else None for k, x in values.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad configuration value: {exc}") from exc
        kind = v.get("policy") or "local_agreement"
        try:
            policy = PolicyConfig(kind, **{k: v[k] for k in POLICY_KEYS if v.get(k) is not None})
            beam = BeamConfig(
                beam_size=v.get("beam_size", 5),
                max_new_tokens=v.get("max_new_tokens"),
                length_norm_alpha=v.get("length_norm_alpha", 1.0),
            )
            cfm = CfmConfig(
                beta=v.get("beta", 0.1),
                feedback_floor=v.get("feedback_floor", 1e-12),
                enabled=v.get("cfm", True),
                persist_contrast_in_score=v.get("persist_contrast", True),
            )
        except (PolicyConfigError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(
            policy=policy, beam=beam, cfm=cfm,
            chunk_ms=v.get("chunk_ms", 1000),
            dataset_path=v.get("dataset", "") or "",
            seed=v.get("seed", 0),
            workers=v.get("workers", 1),
            clock=v.get("clock", "ideal"),
            resamples=v.get("resamples", 1000),
            ci_level=v.get("ci_level", 0.95),
        )

    def to_flat(self) -> Dict[str, object]:
        flat = {
            "policy": self.policy.kind,
            "beam_size": self.beam.beam_size,
            "max_new_tokens": self.beam.max_new_tokens,
            "length_norm_alpha": self.beam.length_norm_alpha,
            "cfm": self.cfm.enabled,
            "beta": self.cfm.beta,
            "feedback_floor": self.cfm.feedback_floor,
            "persist_contrast": self.cfm.persist_contrast_in_score,
            "chunk_ms": self.chunk_ms,
            "dataset": self.dataset_path,
            "seed": self.seed,
            "workers": self.workers,
            "clock": self.clock,
            "resamples": self.resamples,
            "ci_level": self.ci_level,
        }
        for k in POLICY_KEYS:
            if getattr(self.policy, k) is not None:
                flat[k] = getattr(self.policy, k)
        return flat

    def with_values(self, **values) -> "RunConfig":
        flat = self.to_flat()
        if "policy" in values and values["policy"] != flat["policy"]:
            for k in POLICY_KEYS:
                flat.pop(k, None)
        flat.update(values)
        return RunConfig.from_flat(flat)


def parse_kv_file(path) -> Dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


@dataclass
class RunSummary:
    policy: str
    param: str
    chunk_ms: int
    cfm: bool
    bleu: float
    bleu_ci_low: float
    bleu_ci_high: float
    laal_ideal: float
    laal_ca: float
    stall_rate: float
    clock: str
    n_utterances: int = 0
    n_unscored: int = 0
    max_stall_run: int = 0
    logs: List[dict] = field(default_factory=list, repr=False, compare=False)

    def row(self) -> Dict[str, str]:
        return {
            "policy": self.policy,
            "param": self.param,
            "chunk_ms": str(self.chunk_ms),
            "cfm": "on" if self.cfm else "off",
            "bleu": f"{self.bleu:.4f}",
            "bleu_ci_low": f"{self.bleu_ci_low:.4f}",
            "bleu_ci_high": f"{self.bleu_ci_high:.4f}",
            "laal_ideal": f"{self.laal_ideal:.4f}",
            "laal_ca": f"{self.laal_ca:.4f}",
            "stall_rate": f"{self.stall_rate:.4f}",
            "clock": self.clock if self.clock == "ideal" else "measured(nondeterministic)",
        }


def format_summary(rows: Iterable[RunSummary]) -> str:
    lines = ["\t".join(SUMMARY_COLUMNS)]
    for r in rows:
        cells = r.row()
        lines.append("\t".join(cells[c] for c in SUMMARY_COLUMNS))
    return "\n".join(lines) + "\n"


def write_summary(rows: Iterable[RunSummary], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_summary(rows))


def _utterance_record(utt: Utterance, state) -> dict:
    non_final = [c for c in state.chunks if not c["final"]]
    stalls = [len(c["stable"]) == 0 for c in non_final]
    longest = run = 0
    for s in stalls:
        run = run + 1 if s else 0
        longest = max(longest, run)
    return {
        "id": utt.id,
        "source_ms": utt.source.duration_ms,
        "reference": list(utt.reference),
        "hypothesis": list(state.emitted),
        "events": [e.to_json() for e in state.events],
        "chunks": state.chunks,
        "stalled_chunks": sum(stalls),
        "nonfinal_chunks": len(non_final),
        "max_stall_run": longest,
    }


_WORKER_MODELS: Dict[TaskSpec, SyntheticModel] = {}


def _translate_job(job) -> dict:
    task, cfg, chunk_frames, utt = job
    model = _WORKER_MODELS.get(task)
    if model is None:
        model = _WORKER_MODELS[task] = SyntheticModel(task)
    state = translate(utt.source, model, cfg.policy, cfg.beam, cfg.cfm, chunk_frames=chunk_frames,
                      frames_per_token=task.frames_per_token, clock=cfg.clock)
    return _utterance_record(utt, state)


def load_dataset(path) -> Tuple[List[Utterance], TaskSpec]:
    try:
        return read_corpus(path)
    except CorpusError as exc:
        raise InputError(str(exc)) from exc


def run_header(config: RunConfig, task: Optional[TaskSpec]) -> dict:
    return {
        "version": __version__,
        "config": config.to_flat(),
        "param": config.policy.param_label,
        "task": task.to_json() if task else None,
    }


def summarize(header: dict, records: Sequence[dict]) -> RunSummary:
    cfg = header["config"]
    hyps = [r["hypothesis"] for r in records]
    refs = [r["reference"] for r in records]
    ideal, ca = [], []
    for r in records:
        events = tuple(EmissionEvent.from_json(e) for e in r["events"])
        if not events:
            continue
        rec = LatencyRecord(events, r["source_ms"], len(r["reference"]))
        ideal.append(laal(rec, computational_aware=False))
        ca.append(laal(rec, computational_aware=True))
    bleu = corpus_bleu(hyps, refs)
    lo, hi = bootstrap_ci(hyps, refs, resamples=cfg["resamples"], seed=cfg["seed"], level=cfg["ci_level"])
    nonfinal = sum(r["nonfinal_chunks"] for r in records)
    return RunSummary(
        policy=cfg["policy"],
        param=header["param"],
        chunk_ms=cfg["chunk_ms"],
        cfm=bool(cfg["cfm"]),
        bleu=bleu,
        bleu_ci_low=lo,
        bleu_ci_high=hi,
        laal_ideal=mean(ideal),
        laal_ca=mean(ca),
        stall_rate=sum(r["stalled_chunks"] for r in records) / nonfinal if nonfinal else 0.0,
        clock=cfg["clock"],
        n_utterances=len(records),
        n_unscored=len(records) - len(ideal),
        max_stall_run=max((r["max_stall_run"] for r in records), default=0),
        logs=list(records),
    )


def run(config: RunConfig, log_path=None, corpus: Optional[Sequence[Utterance]] = None,
        task: Optional[TaskSpec] = None) -> RunSummary:
    """Translate every utterance of the dataset and score the result."""
    if corpus is None:
        corpus, task = load_dataset(config.dataset_path)
    if task is None:
        raise ConfigError("an in-memory corpus needs its TaskSpec")
    if config.chunk_ms % task.frame_ms:
        raise ConfigError(f"chunk_ms={config.chunk_ms} is not a multiple of frame_ms={task.frame_ms}")
    chunk_frames = config.chunk_ms // task.frame_ms
    jobs = [(task, config, chunk_frames, u) for u in corpus]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_translate_job, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))
    else:
        records = [_translate_job(j) for j in jobs]
    header = run_header(config, task)
    summary = summarize(header, records)
    if log_path is not None:
        write_log(log_path, header, records)
    log.info("%s %s chunk=%dms cfm=%s: BLEU %.2f LAAL %.1f ms", config.policy.kind,
             config.policy.param_label, config.chunk_ms, config.cfm.enabled, summary.bleu, summary.laal_ideal)
    return summary


def write_log(path, header: dict, records: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


REQUIRED_RECORD_KEYS = ("id", "source_ms", "reference", "hypothesis", "events",
                        "stalled_chunks", "nonfinal_chunks", "max_stall_run")


def read_log(path) -> Tuple[dict, List[dict]]:
    """Parse one or more concatenated run logs; the first header wins."""
    header, records = None, []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot open run log ({exc.strerror})") from exc
    with fh:
        index = 0
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: record {index} (line {lineno}) is corrupt: {exc.msg}") from exc
            if "header" in obj:
                header = header or obj["header"]
                continue
            missing = [k for k in REQUIRED_RECORD_KEYS if k not in obj]
            if missing or not isinstance(obj.get("events"), list):
                raise InputError(f"{path}: record {index} (line {lineno}) lacks {', '.join(missing) or 'events'}")
            try:
                for e in obj["events"]:
                    EmissionEvent.from_json(e)
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{path}: record {index} (line {lineno}) has a bad event") from exc
            records.append(obj)
            index += 1
    if header is None:
        raise InputError(f"{path}: no run header found")
    if not records:
        raise InputError(f"{path}: no utterance records")
    return header, records


def score(*log_paths) -> RunSummary:
    """Recompute the summary from persisted logs (several logs are pooled)."""
    header, records = None, []
    for p in log_paths:
        h, r = read_log(p)
        header = header or h
        records.extend(r)
    return summarize(header, records)


@dataclass(frozen=True)
class SweepConfig:
    base: RunConfig
    grid: Tuple[Tuple[str, Tuple[object, ...]], ...] = ()
    paired_ablation: bool = True

    def __post_init__(self):
        grid = tuple((str(k), tuple(v)) for k, v in self.grid)
        object.__setattr__(self, "grid", grid)
        for name, values in grid:
            if name not in FLAT_KEYS:
                raise ConfigError(f"grid parameter {name!r} is not a run setting")
            if not values:
                raise ConfigError(f"grid parameter {name!r} has no values")

    def points(self) -> List[RunConfig]:
        names = [k for k, _ in self.grid]
        configs = []
        for combo in itertools.product(*(v for _, v in self.grid)):
            cfg = self.base.with_values(**dict(zip(names, combo))) if names else self.base
            if self.paired_ablation:
                configs.append(cfg.with_values(cfm=True))
                configs.append(cfg.with_values(cfm=False))
            else:
                configs.append(cfg)
        return configs


def sweep(config: SweepConfig, log_dir=None) -> List[RunSummary]:
    """Run every grid point (CFM on and off when paired); rows sorted by latency."""
    corpus, task = load_dataset(config.base.dataset_path)
    rows = []
    for i, cfg in enumerate(config.points()):
        log_path = None
        if log_dir is not None:
            log_path = f"{log_dir}/run{i:03d}_{cfg.policy.kind}_{cfg.policy.param_label}_{cfg.chunk_ms}ms_cfm-{'on' if cfg.cfm.enabled else 'off'}.jsonl"
        rows.append(run(cfg, log_path=log_path, corpus=corpus, task=task))
    order = sorted(range(len(rows)), key=lambda i: (rows[i].laal_ideal, i))
    return [rows[i] for i in order]


__all__ = [
    "ConfigError", "InputError", "RunConfig", "RunSummary", "SweepConfig", "FLAT_KEYS",
    "SUMMARY_COLUMNS", "parse_kv_file", "run", "sweep", "score", "summarize", "read_log",
    "write_log", "format_summary", "write_summary", "POLICY_KINDS",
]
