"""labelforge command line.

Subcommands: ingest, consistency, dupes, pin, audit, workflow, export, serve.
Exit codes: 0 success, 1 domain error, 2 usage error.  Reports print to
stdout as an aligned table or json-lines; with --out-dir they are also
written as a .tsv plus a .png figure side by side.
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Optional

import click

from . import reports as rpt
from .annotations import LabelValue, export_cleaned, ingest_attribute_file
from .audit import error_rates
from .consistency import disagreement_counts, inconsistency_level
from .duplicates import (
    EmbeddingStore,
    PairQueue,
    Verdict,
    attribute_conflicts,
    find_candidate_pairs,
)
from .errors import LabelForgeError
from .probe import TrainConfig
from .project import DATA_ROOT_ENV, Project, default_data_root
from .workflow import Status, WorkflowConfig, check_convergence, init_workflow
from .workflow import mark_manual as wf_mark_manual
from .workflow import run_round, run_to_convergence, step

FORMAT_OPTION = click.option("--format", "fmt", default="table",
                             type=click.Choice(["table", "json-lines"]),
                             help="stdout rendering")
OUT_DIR_OPTION = click.option("--out-dir", type=click.Path(path_type=Path),
                              default=None,
                              help="also write <name>.tsv and <name>.png here")
DATA_ROOT_OPTION = click.option("--data-root", type=click.Path(path_type=Path),
                                default=None,
                                help=f"project root (default ${DATA_ROOT_ENV} or .)")


def _root(data_root: Optional[Path]) -> Path:
    return data_root if data_root is not None else default_data_root()


def _emit(columns, rows, fmt: str, out_dir: Optional[Path], name: str,
          figure=None) -> None:
    click.echo(rpt.render(columns, rows, fmt))
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        rpt.write_tsv(columns, rows, out_dir / f"{name}.tsv")
        if figure is not None:
            figure(out_dir / f"{name}.png")
        click.echo(f"wrote {out_dir / (name + '.tsv')}"
                   + (f" and {out_dir / (name + '.png')}" if figure else ""),
                   err=True)


def _read_binary_labels(path: Path) -> dict[str, bool]:
    """Two whitespace-separated columns: image_id and a 1/-1 token."""
    labels: dict[str, bool] = {}
    for ln in path.read_text().splitlines():
        if not ln.strip():
            continue
        image_id, token = ln.split()
        value = LabelValue.from_token(token)
        if value is LabelValue.INFO_NOT_VISIBLE:
            raise LabelForgeError("BAD_VALUE",
                                  f"{path}: binary label file contains 0 for {image_id}")
        labels[image_id] = value is LabelValue.TRUE
    return labels


@click.group()
def cli() -> None:
    """Annotation quality auditing and ensemble-agreement label cleaning."""


# -- ingest ------------------------------------------------------------------

@cli.command()
@click.option("--project", "project_id", required=True)
@click.option("--attributes", "attributes_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--file-format", "format",
              type=click.Choice(["celeba_original", "extended"]),
              default="celeba_original", show_default=True)
@click.option("--embeddings", "embeddings_path",
              type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--partition", "partition_path",
              type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--image-root", default=None,
              help="directory the service serves image files from")
@DATA_ROOT_OPTION
def ingest(project_id, attributes_path, format, embeddings_path,
           partition_path, image_root, data_root) -> None:
    """Create a project from an attribute list file."""
    project = Project.create(_root(data_root), project_id, attributes_path,
                             format=format, embeddings_path=embeddings_path,
                             partition_path=partition_path, image_root=image_root)
    matrix = project.matrix
    click.echo(f"project {project_id}: {len(matrix.usable_ids())} images, "
               f"{len(matrix.attributes)} attributes, "
               f"{len(matrix.unusable_ids())} unusable")


# -- consistency --------------------------------------------------------------

@cli.command()
@click.option("--pass-a", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--pass-b", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--file-format", "format",
              type=click.Choice(["celeba_original", "extended"]),
              default="extended", show_default=True)
@FORMAT_OPTION
@OUT_DIR_OPTION
def consistency(pass_a, pass_b, format, fmt, out_dir) -> None:
    """Two-pass disagreement counts and consistency tiers."""
    a = ingest_attribute_file(pass_a, format=format)
    b = ingest_attribute_file(pass_b, format=format)
    results = disagreement_counts(a, b)
    _emit(rpt.CONSISTENCY_COLUMNS, rpt.consistency_rows(results), fmt, out_dir,
          "consistency", lambda p: rpt.consistency_figure(results, p))


# -- duplicate pairs ------------------------------------------------------------

@cli.group()
def dupes() -> None:
    """Duplicate-pair discovery and review."""


@dupes.command("find")
@click.option("--project", "project_id", default=None)
@click.option("--embeddings", "embeddings_path",
              type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--threshold", type=float, default=0.9, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="pair queue file (default: project pairs.tsv)")
@DATA_ROOT_OPTION
def dupes_find(project_id, embeddings_path, threshold, out_path, data_root) -> None:
    """Discover same-identity candidate pairs above a similarity threshold."""
    if embeddings_path is not None:
        store = EmbeddingStore.from_file(embeddings_path)
    elif project_id is not None:
        store = Project.open(_root(data_root), project_id).embeddings
    else:
        raise click.UsageError("provide --project or --embeddings")
    pairs = find_candidate_pairs(store, threshold)
    queue = PairQueue(pairs)
    if out_path is None:
        if project_id is None:
            raise click.UsageError("provide --out when not using --project")
        project = Project.open(_root(data_root), project_id)
        project.save_pairs(queue)
        out_path = project.dir / "pairs.tsv"
    else:
        queue.to_file(out_path)
    click.echo(f"{len(pairs)} candidate pairs >= {threshold} -> {out_path}")


@dupes.command("verdict")
@click.option("--project", "project_id", default=None)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--pair", "pair_id", required=True)
@click.option("--verdict", required=True,
              type=click.Choice(["DUPLICATE", "NEAR_DUPLICATE_REJECTED"]))
@click.option("--reviewer", required=True)
@DATA_ROOT_OPTION
def dupes_verdict(project_id, pairs_path, pair_id, verdict, reviewer, data_root) -> None:
    """Record a reviewer's verdict on a candidate pair."""
    if pairs_path is not None:
        queue = PairQueue.from_file(pairs_path)
        save = lambda: queue.to_file(pairs_path)
    elif project_id is not None:
        project = Project.open(_root(data_root), project_id)
        queue = project.load_pairs()
        save = lambda: project.save_pairs(queue)
    else:
        raise click.UsageError("provide --project or --pairs")
    pair = queue.record_verdict(pair_id, Verdict(verdict), reviewer)
    save()
    click.echo(f"{pair.pair_id}: {pair.verdict.value} by {reviewer}")


# -- pin ---------------------------------------------------------------------------

@cli.command()
@click.option("--project", "project_id", default=None)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--labels", "labels_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--file-format", "format",
              type=click.Choice(["celeba_original", "extended"]),
              default="celeba_original", show_default=True)
@click.option("--exclude", multiple=True,
              help="attribute(s) to drop from the report, e.g. image-level ones")
@click.option("--include-pending", is_flag=True,
              help="treat PENDING pairs as confirmed duplicates")
@FORMAT_OPTION
@OUT_DIR_OPTION
@DATA_ROOT_OPTION
def pin(project_id, pairs_path, labels_path, format, exclude, include_pending,
        fmt, out_dir, data_root) -> None:
    """Per-attribute inconsistency over confirmed duplicate pairs."""
    if pairs_path is not None and labels_path is not None:
        queue = PairQueue.from_file(pairs_path)
        matrix = ingest_attribute_file(labels_path, format=format)
    elif project_id is not None:
        project = Project.open(_root(data_root), project_id)
        queue = project.load_pairs()
        matrix = project.matrix
    else:
        raise click.UsageError("provide --project or both --pairs and --labels")
    pairs = list(queue.pairs.values())
    if include_pending:
        for p in pairs:
            if p.verdict is Verdict.PENDING:
                p.verdict = Verdict.DUPLICATE
    conflicts = attribute_conflicts(pairs, matrix)
    stats = []
    for attribute, (n_differ, n_p, n_n, n_total) in conflicts.items():
        if n_total == 0 or n_p == 0 or n_n == 0:
            continue  # degenerate stratum: no defined inconsistency level
        stats.append(inconsistency_level(attribute, n_differ, n_p, n_n, n_total))
    _emit(rpt.PIN_COLUMNS, rpt.pin_rows(stats, exclude), fmt, out_dir,
          "pin", lambda p: rpt.pin_figure(stats, p, exclude))


# -- audit -------------------------------------------------------------------------

@cli.group()
def audit() -> None:
    """Stratified error audits: plan, label, reconcile, close, report."""


@audit.command("plan")
@click.option("--project", "project_id", required=True)
@click.option("--attribute", required=True)
@click.option("--value", required=True, type=click.Choice(["true", "false"]))
@click.option("--min", "min_per_value", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@DATA_ROOT_OPTION
def audit_plan(project_id, attribute, value, min_per_value, seed, data_root) -> None:
    """Sample a stratum and open an audit session."""
    project = Project.open(_root(data_root), project_id)
    target = LabelValue.TRUE if value == "true" else LabelValue.FALSE
    session_id, session = project.create_session(attribute, target,
                                                 min_per_value, seed)
    click.echo(f"session {session_id}: {len(session.plan.sample_ids)} images sampled")


@audit.command("label")
@click.option("--project", "project_id", required=True)
@click.option("--session", "session_id", required=True)
@click.option("--annotation-pass", "which", required=True, type=click.Choice(["a", "b"]))
@click.option("--image", "image_id", default=None)
@click.option("--value", "token", default=None, help="1, -1 or 0")
@click.option("--labels", "labels_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="bulk file: image_id and token per line")
@DATA_ROOT_OPTION
def audit_label(project_id, session_id, which, image_id, token, labels_path,
                data_root) -> None:
    """Record labels for one annotation pass (single cell or bulk file)."""
    project = Project.open(_root(data_root), project_id)
    session = project.load_session(session_id)
    if labels_path is not None:
        n = 0
        for ln in labels_path.read_text().splitlines():
            if not ln.strip():
                continue
            img, tok = ln.split()
            session.record_label(which, img, LabelValue.from_token(tok))
            n += 1
        click.echo(f"recorded {n} labels in pass {which}")
    elif image_id is not None and token is not None:
        session.record_label(which, image_id, LabelValue.from_token(token))
        click.echo(f"recorded {image_id} = {token} in pass {which}")
    else:
        raise click.UsageError("provide --image and --value, or --labels")
    project.save_session(session_id, session)


@audit.command("reconcile")
@click.option("--project", "project_id", required=True)
@click.option("--session", "session_id", required=True)
@click.option("--image", "image_id", default=None)
@click.option("--value", "token", default=None)
@click.option("--list", "list_only", is_flag=True, help="list open disagreements")
@DATA_ROOT_OPTION
def audit_reconcile(project_id, session_id, image_id, token, list_only,
                    data_root) -> None:
    """Resolve two-pass disagreements to consensus values."""
    project = Project.open(_root(data_root), project_id)
    session = project.load_session(session_id)
    if list_only:
        open_items = [i for i in session.disagreements() if i not in session.consensus]
        for item in open_items:
            click.echo(f"{item}\t{session.pass_a[item].token}\t{session.pass_b[item].token}")
        click.echo(f"{len(open_items)} unresolved", err=True)
        return
    if image_id is None or token is None:
        raise click.UsageError("provide --image and --value, or --list")
    session.resolve(image_id, LabelValue.from_token(token))
    project.save_session(session_id, session)
    click.echo(f"consensus {image_id} = {token}")


@audit.command("close")
@click.option("--project", "project_id", required=True)
@click.option("--session", "session_id", required=True)
@DATA_ROOT_OPTION
def audit_close(project_id, session_id, data_root) -> None:
    """Close a session (requires every disagreement resolved)."""
    project = Project.open(_root(data_root), project_id)
    session = project.load_session(session_id)
    session.close()
    project.save_session(session_id, session)
    click.echo(f"session {session_id} closed")


@audit.command("report")
@click.option("--project", "project_id", required=True)
@click.option("--attribute", "attributes", multiple=True,
              help="restrict to these attributes (default: all with closed sessions)")
@FORMAT_OPTION
@OUT_DIR_OPTION
@DATA_ROOT_OPTION
def audit_report(project_id, attributes, fmt, out_dir, data_root) -> None:
    """Error-rate estimates from closed sessions, with Wilson intervals."""
    project = Project.open(_root(data_root), project_id)
    by_attribute: dict[str, list] = {}
    for session_id in project.session_ids():
        session = project.load_session(session_id)
        if session.status.value != "CLOSED":
            continue
        if attributes and session.plan.attribute not in attributes:
            continue
        by_attribute.setdefault(session.plan.attribute, []).append(session)
    if not by_attribute:
        raise LabelForgeError("SESSION_NOT_CLOSED", "no closed sessions to report")
    results = [error_rates(project.matrix, *sessions)
               for _, sessions in sorted(by_attribute.items())]
    _emit(rpt.ERROR_COLUMNS, rpt.error_rows(results), fmt, out_dir,
          "errors", lambda p: rpt.error_figure(results, p))


# -- workflow ---------------------------------------------------------------------

@cli.group()
def workflow() -> None:
    """Ensemble-agreement cleaning workflow."""


@workflow.command("init")
@click.option("--project", "project_id", required=True)
@click.option("--id", "workflow_id", required=True)
@click.option("--attribute", required=True)
@click.option("--seed-labels", "seed_path", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="trusted labels: image_id and 1/-1 per line")
@click.option("--k", type=int, default=3, show_default=True)
@click.option("--subset-fraction", type=float, default=0.8, show_default=True)
@click.option("--target-error", type=float, default=0.05, show_default=True)
@click.option("--audit-sample-size", type=int, default=100, show_default=True)
@click.option("--small-bin-threshold", type=int, default=2000, show_default=True)
@click.option("--max-rounds", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--probe-epochs", type=int, default=50, show_default=True)
@click.option("--probe-batch", type=int, default=128, show_default=True)
@DATA_ROOT_OPTION
def workflow_init(project_id, workflow_id, attribute, seed_path, k,
                  subset_fraction, target_error, audit_sample_size,
                  small_bin_threshold, max_rounds, seed, probe_epochs,
                  probe_batch, data_root) -> None:
    """Bootstrap a workflow from a trusted seed; the rest of the matrix is the pool."""
    project = Project.open(_root(data_root), project_id)
    seed_labels = _read_binary_labels(seed_path)
    uncleaned = set(project.matrix.usable_ids()) - set(seed_labels)
    config = WorkflowConfig(
        k=k, subset_fraction=subset_fraction, target_error=target_error,
        audit_sample_size=audit_sample_size, small_bin_threshold=small_bin_threshold,
        max_rounds=max_rounds, seed=seed,
        probe=TrainConfig(epochs=probe_epochs, batch_size=probe_batch, seed=seed),
    )
    state = init_workflow(seed_labels, uncleaned, attribute, config)
    project.save_workflow(workflow_id, state)
    click.echo(f"workflow {workflow_id}: seed {len(seed_labels)}, "
               f"pool {len(uncleaned)}, status {state.status.value}")


def _truth_auditor(path: Path):
    truth = _read_binary_labels(path)

    def auditor(ids: list[str]) -> dict[str, bool]:
        missing = [i for i in ids if i not in truth]
        if missing:
            raise LabelForgeError("INCOMPLETE_LABELS",
                                  f"truth file lacks {len(missing)} ids "
                                  f"(first: {missing[0]!r})")
        return {i: truth[i] for i in ids}

    return auditor


@workflow.command("step")
@click.option("--project", "project_id", required=True)
@click.option("--id", "workflow_id", required=True)
@click.option("--truth", "truth_path", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="consensus labels used for bin audits and manual bins")
@DATA_ROOT_OPTION
def workflow_step(project_id, workflow_id, truth_path, data_root) -> None:
    """Run one round (train ensemble, bin, audit, hand-label small bins)."""
    project = Project.open(_root(data_root), project_id)
    state = project.load_workflow(workflow_id)
    if state.status is not Status.RUNNING:
        click.echo(f"workflow {workflow_id} is {state.status.value}; nothing to do")
        return
    step(state, project.embeddings, _truth_auditor(truth_path))
    project.save_workflow(workflow_id, state)
    click.echo(rpt.render(rpt.WORKFLOW_COLUMNS, rpt.workflow_rows(state), "table"))
    click.echo(f"round {state.round}: cleaned {len(state.cleaned_labels)}, "
               f"uncleaned {len(state.uncleaned_pool)}, status {state.status.value}")


@workflow.command("run")
@click.option("--project", "project_id", required=True)
@click.option("--id", "workflow_id", required=True)
@click.option("--truth", "truth_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@DATA_ROOT_OPTION
def workflow_run(project_id, workflow_id, truth_path, data_root) -> None:
    """Iterate rounds until the workflow converges or exhausts its budget."""
    project = Project.open(_root(data_root), project_id)
    state = project.load_workflow(workflow_id)
    if state.status is not Status.RUNNING:
        click.echo(f"workflow {workflow_id} is {state.status.value}; nothing to do")
        return
    run_to_convergence(state, project.embeddings, _truth_auditor(truth_path))
    project.save_workflow(workflow_id, state)
    click.echo(f"workflow {workflow_id}: {state.status.value} after round "
               f"{state.round}, estimated error "
               f"{state.overall_estimated_error():.4f}")


@workflow.command("status")
@click.option("--project", "project_id", required=True)
@click.option("--id", "workflow_id", required=True)
@FORMAT_OPTION
@OUT_DIR_OPTION
@DATA_ROOT_OPTION
def workflow_status(project_id, workflow_id, fmt, out_dir, data_root) -> None:
    """Per-bin summary of the current round."""
    project = Project.open(_root(data_root), project_id)
    state = project.load_workflow(workflow_id)
    _emit(rpt.WORKFLOW_COLUMNS, rpt.workflow_rows(state), fmt, out_dir,
          f"workflow_{workflow_id}", lambda p: rpt.workflow_figure(state, p))
    click.echo(f"status {state.status.value}, round {state.round}, "
               f"estimated error {state.overall_estimated_error():.4f}", err=True)


@workflow.command("apply")
@click.option("--project", "project_id", required=True)
@click.option("--id", "workflow_id", required=True)
@DATA_ROOT_OPTION
def workflow_apply(project_id, workflow_id, data_root) -> None:
    """Write the workflow's cleaned labels into the project matrix."""
    project = Project.open(_root(data_root), project_id)
    state = project.load_workflow(workflow_id)
    matrix = project.matrix
    entries = []
    changed = 0
    for image_id, flag in sorted(state.cleaned_labels.items()):
        value = LabelValue.from_bool(flag)
        if matrix.value(image_id, state.attribute) is not value:
            entries.append(matrix.apply_label(image_id, state.attribute, value,
                                              source=f"workflow:{workflow_id}"))
            changed += 1
    project.save_matrix()
    project.append_provenance(entries)
    click.echo(f"applied {changed} label changes from workflow {workflow_id}")


# -- export / serve ------------------------------------------------------------------

@cli.command()
@click.option("--project", "project_id", required=True)
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@DATA_ROOT_OPTION
def export(project_id, out_path, data_root) -> None:
    """Write the extended-format attribute file (+ unusable sidecar)."""
    project = Project.open(_root(data_root), project_id)
    export_cleaned(project.matrix, out_path)
    n_unusable = len(project.matrix.unusable_ids())
    click.echo(f"wrote {out_path}"
               + (f" and sidecar ({n_unusable} unusable)" if n_unusable else ""))


@cli.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@DATA_ROOT_OPTION
def serve(port, host, data_root) -> None:
    """Run the HTTP service backing the web UI."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(_root(data_root)), host=host, port=port)


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:  # --help and friends
        return exc.exit_code
    except click.exceptions.Abort:
        return 2
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 2
    except LabelForgeError as exc:
        print(f"error {exc.code}: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
