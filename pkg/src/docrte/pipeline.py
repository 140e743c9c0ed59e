"""Stage orchestration: run directory, manifests, resume, and reporting.

Each stage reads files produced by earlier stages and writes its own under
the run directory, then records a manifest with content digests of its
inputs and outputs.  A stage is skipped when its manifest says it already
ran with byte-identical inputs and its outputs are still intact, so an
interrupted pipeline resumes without recomputing (and without re-issuing
chat requests).  All artifact writes are atomic (write to a temp file, then
rename), which keeps a crash from leaving a half-written file that a resume
would mistake for a completed one.

Run directory layout::

    effective_config.json       resolved configuration echo
    manifests/<stage>.json      one manifest per stage
    split/spec_<seed>.json      sampled unseen relations
    split/{train,dev,test}_<seed>.json
    generate/synthetic_<seed>.json, generate/records_<seed>.json
    finetune/pretrain_<seed>.jsonl, finetune/denoised_<seed>.jsonl
    pseudo/pseudo_<seed>.json
    denoise/{denoised,kg,report}_<seed>.json
    eval/{dev,test}_<seed>.json, eval/predictions_{dev,test}_<seed>.json
    report.json, report.txt     aggregate scores (deterministic content)
"""
from __future__ import annotations

import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Sequence

from .backends import CassetteBackend, ChatBackend, LiveChatBackend, RateLimiter, ScriptedBackend
from .config import PipelineConfig
from .denoise import denoise
from .docio import (
    ParseError,
    canonical_dumps,
    file_digest,
    load_corpus,
    load_docred,
    load_json,
    load_registry,
    save_corpus,
    sha256_text,
    write_json_atomic,
    write_text_atomic,
)
from .evaluate import (
    EvalResult,
    aggregate_scores,
    evaluate_re,
    evaluate_rte,
    load_predictions,
    save_predictions,
)
from .generate import ChainConfig, generate_corpus
from .model import (
    Corpus,
    EntityKeyError,
    RelationRegistry,
    ValidationError,
    normalize_entity_key,
)
from .prompts import PromptLibrary
from .pseudo import (
    FinetunePolicy,
    HttpPredictor,
    OraclePredictor,
    PredictorBackend,
    ProcessPredictor,
    PseudoLabelSet,
    RelationGroup,
    TripletBlockError,
    assemble_finetune_dataset,
    infer_pseudo_labels,
    parse_triplet_block,
    partition_relations,
    render_document_text,
    write_finetune_file,
)
from .simulate import chat_script, mock_generation_corpus
from .split import SplitSpec, apply_split, load_split_spec, make_replicates, save_split_spec

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A stage failed while executing; the manifest records the error."""


class MissingStageError(StageError):
    """A stage was requested before one of its dependencies had run."""


STAGE_ORDER = (
    "split",
    "generate",
    "finetune-data",
    "pseudo-label",
    "denoise",
    "finetune-data-denoised",
    "evaluate",
)

STAGE_DEPS: dict[str, tuple[str, ...]] = {
    "split": (),
    "generate": ("split",),
    "finetune-data": ("split",),
    "pseudo-label": ("generate", "split"),
    "denoise": ("generate", "pseudo-label", "split"),
    "finetune-data-denoised": ("denoise", "split"),
    "evaluate": ("split", "denoise"),
}


@dataclass
class StageManifest:
    stage: str
    status: str  # "ok" | "failed"
    inputs: dict[str, str]
    outputs: dict[str, str]
    started_at: str
    finished_at: str
    error: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "status": self.status,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "StageManifest":
        return cls(
            stage=data["stage"],
            status=data["status"],
            inputs=dict(data.get("inputs", {})),
            outputs=dict(data.get("outputs", {})),
            started_at=data.get("started_at", ""),
            finished_at=data.get("finished_at", ""),
            error=data.get("error"),
        )


@dataclass
class StageOutcome:
    stage: str
    status: str  # "ran" | "skipped"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@contextmanager
def run_lock(run_dir: Path) -> Iterator[None]:
    """Exclusive advisory lock: refuse to share a run directory."""
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StageError(
            f"run directory is locked by another process: {lock} "
            "(delete the lock file if that process is gone)"
        ) from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


# Factories let tests substitute counting/failing doubles for the real
# transports without monkeypatching stage internals.
ChatBackendFactory = Callable[["PipelineRunner", int, SplitSpec], ChatBackend]
PredictorFactory = Callable[["PipelineRunner", int, SplitSpec], PredictorBackend]
FinalPredictorFactory = Callable[["PipelineRunner", int, SplitSpec, Corpus, str], PredictorBackend]


class PipelineRunner:
    def __init__(
        self,
        config: PipelineConfig,
        chat_backend_factory: ChatBackendFactory | None = None,
        predictor_factory: PredictorFactory | None = None,
        final_predictor_factory: FinalPredictorFactory | None = None,
    ):
        self.config = config
        self.run_dir = Path(config.run_dir)
        self.chat_backend_factory = chat_backend_factory
        self.predictor_factory = predictor_factory
        self.final_predictor_factory = final_predictor_factory
        self._registry: RelationRegistry | None = None

    # -- small helpers ------------------------------------------------------

    @property
    def registry(self) -> RelationRegistry:
        if self._registry is None:
            self._registry = load_registry(self.config.registry)
        return self._registry

    def path(self, rel: str) -> Path:
        return self.run_dir / rel

    def manifest_path(self, stage: str) -> Path:
        return self.run_dir / "manifests" / f"{stage}.json"

    def read_manifest(self, stage: str) -> StageManifest | None:
        path = self.manifest_path(stage)
        if not path.exists():
            return None
        return StageManifest.from_json(load_json(path))

    def _write_manifest(self, manifest: StageManifest) -> None:
        write_json_atomic(self.manifest_path(manifest.stage), manifest.to_json())

    def _params_digest(self, params: Mapping[str, Any]) -> str:
        return sha256_text(canonical_dumps(dict(params)))

    def _digest_run_files(self, rel_paths: Sequence[str]) -> dict[str, str]:
        digests = {}
        for rel in rel_paths:
            path = self.path(rel)
            if not path.exists():
                raise MissingStageError(f"missing input file for resume check: {path}")
            digests[rel] = file_digest(path)
        return digests

    # -- per-stage file layout ----------------------------------------------

    def split_files(self, seed: int) -> dict[str, str]:
        return {
            "spec": f"split/spec_{seed}.json",
            "train": f"split/train_{seed}.json",
            "dev": f"split/dev_{seed}.json",
            "test": f"split/test_{seed}.json",
        }

    def generate_files(self, seed: int) -> dict[str, str]:
        return {
            "synthetic": f"generate/synthetic_{seed}.json",
            "records": f"generate/records_{seed}.json",
        }

    def denoise_files(self, seed: int) -> dict[str, str]:
        return {
            "denoised": f"denoise/denoised_{seed}.json",
            "kg": f"denoise/kg_{seed}.json",
            "report": f"denoise/report_{seed}.json",
        }

    # -- stage input/output declarations --------------------------------------

    def _stage_spec(self, stage: str) -> tuple[dict[str, Any], list[str], list[str]]:
        """Return (params, input run-files, output run-files) for a stage.

        ``params`` capture every config knob the stage's output depends on;
        a change to any of them invalidates the stage on the next run.
        """
        cfg = self.config
        seeds = list(cfg.seeds)
        params: dict[str, Any] = {"seeds": seeds}
        inputs: list[str] = []
        outputs: list[str] = []
        if stage == "split":
            params.update(m=cfg.m, mixed_policy=cfg.mixed_policy)
            for s in seeds:
                outputs.extend(self.split_files(s).values())
        elif stage == "generate":
            params.update(
                n_related=cfg.n_related,
                docs_per_relation=cfg.docs_per_relation,
                temperature_step2=cfg.temperature_step2,
                temperature_other=cfg.temperature_other,
                max_retries=cfg.max_retries,
                prompt_mode=cfg.prompt_mode,
                entity_types=list(cfg.entity_types),
                backend=cfg.backend,
            )
            if cfg.backend == "mock":
                params["mock"] = cfg.to_json()["mock"]
            for s in seeds:
                inputs.append(self.split_files(s)["spec"])
                outputs.extend(self.generate_files(s).values())
        elif stage == "finetune-data":
            params.update(
                group_size=cfg.group_size,
                keep_empty_prob=cfg.keep_empty_prob,
                instruction=cfg.instruction,
            )
            for s in seeds:
                inputs.append(self.split_files(s)["spec"])
                inputs.append(self.split_files(s)["train"])
                outputs.append(f"finetune/pretrain_{s}.jsonl")
        elif stage == "pseudo-label":
            params.update(predictor=cfg.predictor, instruction=cfg.instruction)
            if cfg.predictor == "mock":
                params["mock"] = cfg.to_json()["mock"]
                params["docs_per_relation"] = cfg.docs_per_relation
                params["n_related"] = cfg.n_related
            for s in seeds:
                inputs.append(self.split_files(s)["spec"])
                inputs.append(self.generate_files(s)["synthetic"])
                outputs.append(f"pseudo/pseudo_{s}.json")
        elif stage == "denoise":
            for s in seeds:
                inputs.append(self.split_files(s)["spec"])
                inputs.append(self.generate_files(s)["synthetic"])
                inputs.append(f"pseudo/pseudo_{s}.json")
                outputs.extend(self.denoise_files(s).values())
        elif stage == "finetune-data-denoised":
            params.update(keep_empty_prob=cfg.keep_empty_prob, instruction=cfg.instruction)
            for s in seeds:
                inputs.append(self.split_files(s)["spec"])
                inputs.append(self.denoise_files(s)["denoised"])
                outputs.append(f"finetune/denoised_{s}.jsonl")
        elif stage == "evaluate":
            params.update(
                final_predictor=cfg.final_predictor,
                strict_seen=cfg.strict_seen,
                instruction=cfg.instruction,
            )
            if cfg.final_predictor == "mock":
                params["final_drop_prob"] = cfg.mock.final_drop_prob
                params["world_seed"] = cfg.mock.world_seed
            if cfg.final_predictor == "file":
                params["predictions_dev"] = cfg.predictions_dev
                params["predictions_test"] = cfg.predictions_test
            for s in seeds:
                inputs.append(self.split_files(s)["spec"])
                inputs.append(self.split_files(s)["dev"])
                inputs.append(self.split_files(s)["test"])
                inputs.append(self.denoise_files(s)["denoised"])
                outputs.append(f"eval/dev_{s}.json")
                outputs.append(f"eval/test_{s}.json")
                outputs.append(f"eval/predictions_dev_{s}.json")
                outputs.append(f"eval/predictions_test_{s}.json")
            outputs.append("report.json")
            outputs.append("report.txt")
        else:
            raise StageError(f"unknown stage: {stage!r}")
        return params, inputs, outputs

    def _source_digests(self, stage: str) -> dict[str, str]:
        """Digests of config-named input files the stage reads directly."""
        cfg = self.config
        names: list[str] = []
        if stage == "split":
            names = ["registry", "train_docs", "dev_docs", "test_docs"]
        elif stage in ("generate", "finetune-data", "pseudo-label", "denoise",
                       "finetune-data-denoised", "evaluate"):
            names = ["registry"]
        digests: dict[str, str] = {}
        for name in names:
            path = Path(getattr(cfg, name))
            if not path.exists():
                raise StageError(f"config {name} points to a missing file: {path}")
            digests[f"config:{name}"] = file_digest(path)
        if stage == "generate" and cfg.templates_dir:
            for tpl in sorted(Path(cfg.templates_dir).glob("*.txt")):
                digests[f"template:{tpl.name}"] = file_digest(tpl)
        if stage == "evaluate" and cfg.final_predictor == "file":
            for name, template in (("dev", cfg.predictions_dev), ("test", cfg.predictions_test)):
                if not template:
                    continue
                for seed in cfg.seeds:
                    path = Path(str(template).replace("{seed}", str(seed)))
                    if not path.exists():
                        raise StageError(f"predictions file not found: {path}")
                    digests[f"predictions:{name}:{seed}"] = file_digest(path)
        return digests

    # -- skip / run machinery -------------------------------------------------

    def _check_deps(self, stage: str) -> None:
        for dep in STAGE_DEPS[stage]:
            manifest = self.read_manifest(dep)
            if manifest is None or manifest.status != "ok":
                raise MissingStageError(
                    f"missing stage: {dep} (run it before {stage!r})"
                )

    def _compute_inputs(self, stage: str) -> dict[str, str]:
        params, input_files, _ = self._stage_spec(stage)
        inputs = {"params": self._params_digest(params)}
        inputs.update(self._source_digests(stage))
        inputs.update(self._digest_run_files(input_files))
        return inputs

    def _outputs_intact(self, manifest: StageManifest) -> bool:
        for rel, digest in manifest.outputs.items():
            path = self.path(rel)
            if not path.exists() or file_digest(path) != digest:
                return False
        return True

    def run_stage(self, stage: str, force: bool = False) -> StageOutcome:
        """Run one stage, or skip it when nothing it depends on has changed."""
        if stage not in STAGE_ORDER:
            raise StageError(f"unknown stage: {stage!r}")
        self._check_deps(stage)
        inputs = self._compute_inputs(stage)
        manifest = self.read_manifest(stage)
        if (
            not force
            and manifest is not None
            and manifest.status == "ok"
            and manifest.inputs == inputs
            and self._outputs_intact(manifest)
        ):
            logger.info("stage %s: up to date, skipping", stage)
            return StageOutcome(stage=stage, status="skipped")

        started = _now()
        runner = getattr(self, "_stage_" + stage.replace("-", "_"))
        try:
            runner()
        except Exception as exc:
            self._write_manifest(StageManifest(
                stage=stage, status="failed", inputs=inputs, outputs={},
                started_at=started, finished_at=_now(), error=str(exc),
            ))
            # Input-format and validation problems keep their type so the CLI
            # can report them as bad input rather than a pipeline fault.
            if isinstance(exc, (StageError, ParseError, ValidationError)):
                raise
            raise StageError(f"stage {stage} failed: {exc}") from exc

        _, _, output_files = self._stage_spec(stage)
        outputs = {}
        for rel in output_files:
            path = self.path(rel)
            if not path.exists():
                raise StageError(f"stage {stage} finished without writing {path}")
            outputs[rel] = file_digest(path)
        self._write_manifest(StageManifest(
            stage=stage, status="ok", inputs=inputs, outputs=outputs,
            started_at=started, finished_at=_now(),
        ))
        logger.info("stage %s: done (%d output files)", stage, len(outputs))
        return StageOutcome(stage=stage, status="ran")

    def run(self, stages: Sequence[str] | None = None, force: bool = False) -> list[StageOutcome]:
        """Run the given stages (default: all) under the run-directory lock."""
        wanted = list(stages) if stages is not None else list(STAGE_ORDER)
        for stage in wanted:
            if stage not in STAGE_ORDER:
                raise StageError(f"unknown stage: {stage!r}")
        ordered = [s for s in STAGE_ORDER if s in wanted]
        with run_lock(self.run_dir):
            write_json_atomic(self.path("effective_config.json"), self.config.to_json())
            return [self.run_stage(stage, force=force) for stage in ordered]

    # -- transports -----------------------------------------------------------

    def _mock_world(self, seed: int, spec: SplitSpec):
        return mock_generation_corpus(
            self.registry,
            sorted(spec.unseen),
            sorted(spec.seen),
            seed,
            self.config.docs_per_relation,
            self.config.n_related,
            self.config.mock,
        )

    def _chat_backend(self, seed: int, spec: SplitSpec) -> ChatBackend:
        if self.chat_backend_factory is not None:
            return self.chat_backend_factory(self, seed, spec)
        return self.default_chat_backend(seed, spec)

    def default_chat_backend(self, seed: int, spec: SplitSpec) -> ChatBackend:
        cfg = self.config
        if cfg.backend == "mock":
            world, _, corrupted = self._mock_world(seed, spec)
            return ScriptedBackend(chat_script(world, corrupted))
        if cfg.backend == "cassette":
            if cfg.cassette_mode == "record":
                return CassetteBackend(cfg.cassette_path, mode="record",
                                       inner=self._live_backend())
            return CassetteBackend(cfg.cassette_path, mode="replay")
        return self._live_backend()

    def _live_backend(self) -> LiveChatBackend:
        live = self.config.live
        limiter = RateLimiter(live.rate_per_sec, live.burst) if live.rate_per_sec > 0 else None
        return LiveChatBackend(
            base_url=live.base_url,
            model=live.model,
            api_key_env=live.api_key_env,
            timeout=live.timeout,
            max_attempts=live.max_attempts,
            rate_limiter=limiter,
        )

    def _pseudo_predictor(self, seed: int, spec: SplitSpec) -> PredictorBackend:
        if self.predictor_factory is not None:
            return self.predictor_factory(self, seed, spec)
        return self.default_pseudo_predictor(seed, spec)

    def default_pseudo_predictor(self, seed: int, spec: SplitSpec) -> PredictorBackend:
        cfg = self.config
        if cfg.predictor == "mock":
            _, truth, _ = self._mock_world(seed, spec)
            return OraclePredictor(
                truth, self.registry,
                drop_prob=cfg.mock.pseudo_drop_prob,
                seed=seed,
                restrict_to=sorted(spec.unseen),
            )
        if cfg.predictor == "process":
            return ProcessPredictor(list(cfg.predictor_argv))
        if cfg.predictor == "http":
            return HttpPredictor(cfg.predictor_url)
        raise StageError(
            "predictor is 'none'; configure mock, process, or http to run pseudo-label"
        )

    def _final_predictor(self, seed: int, spec: SplitSpec, gold: Corpus,
                         split_name: str) -> PredictorBackend:
        if self.final_predictor_factory is not None:
            return self.final_predictor_factory(self, seed, spec, gold, split_name)
        return self.default_final_predictor(seed, spec, gold, split_name)

    def default_final_predictor(self, seed: int, spec: SplitSpec, gold: Corpus,
                                split_name: str) -> PredictorBackend:
        cfg = self.config
        if cfg.final_predictor == "mock":
            return OraclePredictor(
                gold, self.registry,
                drop_prob=cfg.mock.final_drop_prob,
                seed=seed * 2 + (0 if split_name == "dev" else 1),
            )
        if cfg.final_predictor == "process":
            return ProcessPredictor(list(cfg.final_predictor_argv))
        if cfg.final_predictor == "http":
            return HttpPredictor(cfg.final_predictor_url)
        raise StageError(
            "final_predictor is 'none'; configure mock, process, http, or file to evaluate"
        )

    # -- stages ---------------------------------------------------------------

    def _stage_split(self) -> None:
        cfg = self.config
        registry = self.registry
        train_src = load_docred(cfg.train_docs, registry)
        dev_src = load_docred(cfg.dev_docs, registry)
        test_src = load_docred(cfg.test_docs, registry)
        for spec in make_replicates(registry, cfg.m, cfg.seeds):
            bundle = apply_split(train_src, dev_src, test_src, spec, cfg.mixed_policy)
            files = self.split_files(spec.seed)
            save_split_spec(spec, self.path(files["spec"]))
            save_corpus(bundle.train, self.path(files["train"]))
            save_corpus(bundle.eval_dev, self.path(files["dev"]))
            save_corpus(bundle.eval_test, self.path(files["test"]))

    def _stage_generate(self) -> None:
        cfg = self.config
        prompts = PromptLibrary(cfg.templates_dir)
        chain_config = ChainConfig(
            n_related=cfg.n_related,
            docs_per_relation=cfg.docs_per_relation,
            temperature_step2=cfg.temperature_step2,
            temperature_other=cfg.temperature_other,
            max_retries=cfg.max_retries,
            prompt_mode=cfg.prompt_mode,
            entity_types=cfg.entity_types,
        )
        for seed in cfg.seeds:
            spec = load_split_spec(self.path(self.split_files(seed)["spec"]))
            backend = self._chat_backend(seed, spec)
            corpus, records = generate_corpus(
                backend, sorted(spec.unseen), self.registry, chain_config,
                prompts=prompts, parallelism=cfg.parallelism,
            )
            files = self.generate_files(seed)
            save_corpus(corpus, self.path(files["synthetic"]))
            write_json_atomic(self.path(files["records"]),
                              [r.to_json() for r in records])

    def _stage_finetune_data(self) -> None:
        cfg = self.config
        for seed in cfg.seeds:
            spec = load_split_spec(self.path(self.split_files(seed)["spec"]))
            train = load_corpus(self.path(self.split_files(seed)["train"]), self.registry)
            groups = partition_relations(sorted(spec.seen), cfg.group_size, seed=seed)
            policy = FinetunePolicy(instruction=cfg.instruction,
                                    keep_empty_prob=cfg.keep_empty_prob, seed=seed)
            samples = assemble_finetune_dataset(train, groups, policy, self.registry)
            write_finetune_file(samples, self.path(f"finetune/pretrain_{seed}.jsonl"))

    def _stage_pseudo_label(self) -> None:
        cfg = self.config
        for seed in cfg.seeds:
            spec = load_split_spec(self.path(self.split_files(seed)["spec"]))
            synthetic = load_corpus(
                self.path(self.generate_files(seed)["synthetic"]), self.registry)
            predictor = self._pseudo_predictor(seed, spec)
            try:
                labels = infer_pseudo_labels(
                    predictor, synthetic, sorted(spec.unseen),
                    cfg.instruction, self.registry,
                )
            finally:
                close = getattr(predictor, "close", None)
                if close:
                    close()
            write_json_atomic(self.path(f"pseudo/pseudo_{seed}.json"), labels.to_json())

    def _stage_denoise(self) -> None:
        for seed in self.config.seeds:
            spec = load_split_spec(self.path(self.split_files(seed)["spec"]))
            synthetic = load_corpus(
                self.path(self.generate_files(seed)["synthetic"]), self.registry)
            pseudo = PseudoLabelSet.from_json(
                load_json(self.path(f"pseudo/pseudo_{seed}.json")))
            denoised, report, rows = denoise(
                synthetic, pseudo.fact_sets(), sorted(spec.unseen))
            files = self.denoise_files(seed)
            save_corpus(denoised, self.path(files["denoised"]))
            write_json_atomic(self.path(files["kg"]), rows)
            write_json_atomic(self.path(files["report"]), report.to_json())

    def _stage_finetune_data_denoised(self) -> None:
        cfg = self.config
        for seed in cfg.seeds:
            spec = load_split_spec(self.path(self.split_files(seed)["spec"]))
            denoised = load_corpus(
                self.path(self.denoise_files(seed)["denoised"]), self.registry)
            groups = [RelationGroup(index=0, relations=tuple(sorted(spec.unseen)))]
            policy = FinetunePolicy(instruction=cfg.instruction,
                                    keep_empty_prob=cfg.keep_empty_prob, seed=seed)
            samples = assemble_finetune_dataset(denoised, groups, policy, self.registry)
            write_finetune_file(samples, self.path(f"finetune/denoised_{seed}.jsonl"))

    def _final_predictions(self, seed: int, spec: SplitSpec, gold: Corpus,
                           split_name: str) -> dict[str, list[tuple[str, str, str]]]:
        cfg = self.config
        if cfg.final_predictor == "file":
            template = cfg.predictions_dev if split_name == "dev" else cfg.predictions_test
            if not template:
                raise StageError(f"no predictions file configured for the {split_name} split")
            path = Path(str(template).replace("{seed}", str(seed)))
            raw = load_predictions(path)
            resolved: dict[str, list[tuple[str, str, str]]] = {}
            for doc_id, triples in raw.items():
                rows = []
                for head, tail, token in triples:
                    rel = self.registry.resolve(token)
                    if rel is None:
                        raise StageError(
                            f"{path}: unknown relation {token!r} in predictions "
                            f"for document {doc_id}"
                        )
                    rows.append((head, tail, rel.id))
                resolved[doc_id] = rows
            return resolved
        predictor = self._final_predictor(seed, spec, gold, split_name)
        menu = [self.registry.name_of(r) for r in sorted(spec.unseen)]
        predictions: dict[str, list[tuple[str, str, str]]] = {}
        try:
            for doc in gold.documents:
                text = render_document_text(doc)
                try:
                    block = predictor.predict(cfg.instruction, text, menu)
                    predictions[doc.doc_id] = parse_triplet_block(block, self.registry)
                except TripletBlockError as exc:
                    logger.warning("unusable prediction for %s: %s", doc.doc_id, exc)
                    predictions[doc.doc_id] = []
        finally:
            close = getattr(predictor, "close", None)
            if close:
                close()
        return predictions

    def _stage_evaluate(self) -> None:
        cfg = self.config
        per_seed: dict[int, dict[str, dict[str, EvalResult]]] = {}
        for seed in cfg.seeds:
            files = self.split_files(seed)
            spec = load_split_spec(self.path(files["spec"]))
            per_seed[seed] = {}
            for split_name in ("dev", "test"):
                gold = load_corpus(self.path(files[split_name]), self.registry)
                preds = self._final_predictions(seed, spec, gold, split_name)
                save_predictions(
                    preds, self.path(f"eval/predictions_{split_name}_{seed}.json"))
                rte = evaluate_rte(preds, gold, spec.unseen, cfg.strict_seen)
                re_preds = _index_predictions(preds, gold)
                re = evaluate_re(re_preds, gold, spec.unseen, cfg.strict_seen)
                per_seed[seed][split_name] = {"rte": rte, "re": re}
                write_json_atomic(
                    self.path(f"eval/{split_name}_{seed}.json"),
                    {"seed": seed, "split": split_name,
                     "rte": rte.to_json(), "re": re.to_json()},
                )
        report = build_report(cfg, per_seed)
        write_json_atomic(self.path("report.json"), report)
        write_text_atomic(self.path("report.txt"), render_report_text(report))

    # convenience used by the CLI after run-all
    def report_text(self) -> str:
        path = self.path("report.txt")
        return path.read_text(encoding="utf-8") if path.exists() else ""


def _index_predictions(
    name_preds: Mapping[str, Sequence[tuple[str, str, str]]],
    corpus: Corpus,
) -> dict[str, list[tuple[int, int, str]]]:
    """Project name-based predictions into each document's entity index space.

    A prediction whose head or tail does not name a listed entity (after
    normalization) cannot be expressed as an index pair and is omitted from
    the index-based view; the name-based scoring still sees it.
    """
    out: dict[str, list[tuple[int, int, str]]] = {}
    for doc in corpus.documents:
        key_to_index = doc.key_to_index()
        rows: list[tuple[int, int, str]] = []
        for head, tail, relation in name_preds.get(doc.doc_id, []):
            try:
                hi = key_to_index.get(normalize_entity_key(head))
                ti = key_to_index.get(normalize_entity_key(tail))
            except EntityKeyError:
                continue
            if hi is None or ti is None or hi == ti:
                continue
            rows.append((hi, ti, relation))
        out[doc.doc_id] = rows
    return out


def build_report(
    config: PipelineConfig,
    per_seed: Mapping[int, Mapping[str, Mapping[str, EvalResult]]],
) -> dict[str, Any]:
    """Assemble the run-level report: per-seed scores plus mean ± std."""
    seeds = sorted(per_seed)
    report: dict[str, Any] = {
        "m": config.m,
        "seeds": seeds,
        "mixed_policy": config.mixed_policy,
        "strict_seen": config.strict_seen,
        "per_seed": {},
        "aggregate": {},
    }
    for seed in seeds:
        report["per_seed"][str(seed)] = {
            split_name: {kind: result.to_json()
                         for kind, result in sorted(kinds.items())}
            for split_name, kinds in sorted(per_seed[seed].items())
        }
    for split_name in ("dev", "test"):
        report["aggregate"][split_name] = {}
        for kind in ("rte", "re"):
            scores = [per_seed[s][split_name][kind].f1 * 100.0 for s in seeds]
            agg = aggregate_scores(scores)
            report["aggregate"][split_name][kind] = {
                "mean": agg.mean, "std": agg.std, "n": agg.n, "text": agg.render(),
            }
    return report


def render_report_text(report: Mapping[str, Any]) -> str:
    """Human-readable summary; content is a pure function of the report."""
    seeds = ",".join(str(s) for s in report["seeds"])
    lines = [
        "zero-shot document-level relation extraction",
        f"unseen relations per split: m={report['m']}   "
        f"seeds: {seeds}   mixed policy: {report['mixed_policy']}",
        "",
        "aggregate micro-F1 (mean ± sample std over seeds, x100):",
    ]
    for split_name in ("dev", "test"):
        agg = report["aggregate"][split_name]
        lines.append(
            f"  {split_name:<4}  triplets (names): {agg['rte']['text']:<14} "
            f"relations (indices): {agg['re']['text']}"
        )
    lines.append("")
    lines.append("per seed:")
    for seed in report["seeds"]:
        row = report["per_seed"][str(seed)]
        cells = []
        for split_name in ("dev", "test"):
            rte = row[split_name]["rte"]
            re_ = row[split_name]["re"]
            cells.append(
                f"{split_name} rte={100 * rte['f1']:.1f} re={100 * re_['f1']:.1f}"
            )
        lines.append(f"  seed {seed}: " + "  |  ".join(cells))
    return "\n".join(lines) + "\n"
