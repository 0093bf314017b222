import json

import numpy as np
import pytest

from labelforge.cli import main

from conftest import NoisyBlobs, write_attr_file


def run(*argv):
    return main(list(argv))


def make_project_inputs(tmp_path, n=60, seed=4):
    """Small dataset: attribute file + embedding file + truth/seed label files."""
    data = NoisyBlobs(n=n, dim=4, seed=seed)
    attrs = write_attr_file(
        tmp_path / "attrs.txt", ["MSO"],
        {i: [1 if data.noisy[i] else -1] for i in data.ids},
    )
    emb = tmp_path / "emb.txt"
    with emb.open("w") as fh:
        fh.write("dim=4\n")
        for k, image_id in enumerate(data.ids):
            vec = " ".join(repr(float(v)) for v in data.X[k])
            fh.write(f"{image_id} ident_{k // 2} {vec}\n")
    truth = tmp_path / "truth.txt"
    truth.write_text("".join(f"{i} {'1' if data.truth[i] else '-1'}\n"
                             for i in data.ids))
    seed_ids = data.ids[::6]
    seed_file = tmp_path / "seed.txt"
    seed_file.write_text("".join(f"{i} {'1' if data.truth[i] else '-1'}\n"
                                 for i in seed_ids))
    return data, attrs, emb, truth, seed_file


def test_unknown_subcommand_exits_2(capsys):
    assert run("definitely-not-a-command") == 2


def test_usage_error_exits_2():
    assert run("ingest") == 2  # missing required options


def test_domain_error_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("9\nMale\na.jpg 1\n")
    assert run("ingest", "--project", "p", "--attributes", str(bad),
               "--data-root", str(tmp_path / "root")) == 1
    assert "COUNT_MISMATCH" in capsys.readouterr().err


def test_help_exits_0():
    assert run("--help") == 0


def test_consistency_command(tmp_path, capsys):
    a = write_attr_file(tmp_path / "a.txt", ["Male", "MSO"],
                        {"x": [1, 1], "y": [-1, 1], "z": [1, -1]})
    b = write_attr_file(tmp_path / "b.txt", ["Male", "MSO"],
                        {"x": [1, -1], "y": [-1, 1], "z": [1, -1]})
    out_dir = tmp_path / "reports"
    assert run("consistency", "--pass-a", str(a), "--pass-b", str(b),
               "--format", "json-lines", "--out-dir", str(out_dir)) == 0
    lines = [json.loads(ln) for ln in capsys.readouterr().out.splitlines()]
    by_attr = {row["attribute"]: row for row in lines}
    assert by_attr["MSO"]["n_d"] == 1
    assert by_attr["Male"]["n_d"] == 0
    assert (out_dir / "consistency.tsv").exists()
    assert (out_dir / "consistency.png").exists()


def test_full_pipeline(tmp_path, capsys):
    data, attrs, emb, truth, seed_file = make_project_inputs(tmp_path)
    root = str(tmp_path / "root")

    assert run("ingest", "--project", "demo", "--attributes", str(attrs),
               "--embeddings", str(emb), "--data-root", root) == 0
    capsys.readouterr()

    # duplicate discovery and review
    assert run("dupes", "find", "--project", "demo", "--threshold", "0.9",
               "--data-root", root) == 0
    out = capsys.readouterr().out
    n_pairs = int(out.split()[0])
    pairs_file = tmp_path / "root" / "demo" / "pairs.tsv"
    pair_rows = pairs_file.read_text().splitlines()[1:]
    assert len(pair_rows) == n_pairs
    if pair_rows:
        pair_id = pair_rows[0].split("\t")[0]
        assert run("dupes", "verdict", "--project", "demo", "--pair", pair_id,
                   "--verdict", "DUPLICATE", "--reviewer", "alice",
                   "--data-root", root) == 0

    # pin report over the queue (counting pending pairs as confirmed)
    out_dir = tmp_path / "pin_out"
    assert run("pin", "--project", "demo", "--include-pending",
               "--format", "json-lines", "--out-dir", str(out_dir),
               "--data-root", root) == 0
    assert (out_dir / "pin.tsv").exists() and (out_dir / "pin.png").exists()

    # audit both strata
    for value, n in (("false", 10), ("true", 10)):
        assert run("audit", "plan", "--project", "demo", "--attribute", "MSO",
                   "--value", value, "--min", str(n), "--seed", "3",
                   "--data-root", root) == 0
    capsys.readouterr()

    truth_map = {ln.split()[0]: ln.split()[1]
                 for ln in truth.read_text().splitlines()}
    for session_id in ("MSO_false_3", "MSO_true_3"):
        session_file = tmp_path / "root" / "demo" / "sessions" / f"{session_id}.tsv"
        sampled = [ln.split("\t")[0]
                   for ln in session_file.read_text().splitlines()
                   if ln and not ln.startswith(("#", "image_id"))]
        bulk = tmp_path / f"{session_id}_labels.txt"
        bulk.write_text("".join(f"{i} {truth_map[i]}\n" for i in sampled))
        for which in ("a", "b"):
            assert run("audit", "label", "--project", "demo", "--session",
                       session_id, "--annotation-pass", which,
                       "--labels", str(bulk), "--data-root", root) == 0
        assert run("audit", "close", "--project", "demo", "--session",
                   session_id, "--data-root", root) == 0
    capsys.readouterr()

    out_dir = tmp_path / "audit_out"
    assert run("audit", "report", "--project", "demo",
               "--format", "json-lines", "--out-dir", str(out_dir),
               "--data-root", root) == 0
    row = json.loads(capsys.readouterr().out.splitlines()[0])
    assert row["attribute"] == "MSO"
    assert row["n_n"] == 10 and row["n_p"] == 10
    assert (out_dir / "errors.tsv").exists() and (out_dir / "errors.png").exists()

    # workflow: init, run to convergence with the truth file, apply, export
    assert run("workflow", "init", "--project", "demo", "--id", "w1",
               "--attribute", "MSO", "--seed-labels", str(seed_file),
               "--small-bin-threshold", "100", "--audit-sample-size", "20",
               "--probe-epochs", "10", "--seed", "5", "--data-root", root) == 0
    assert run("workflow", "run", "--project", "demo", "--id", "w1",
               "--truth", str(truth), "--data-root", root) == 0
    assert "CONVERGED" in capsys.readouterr().out

    # terminal workflow: step is a no-op with exit 0
    assert run("workflow", "step", "--project", "demo", "--id", "w1",
               "--truth", str(truth), "--data-root", root) == 0
    assert "nothing to do" in capsys.readouterr().out

    out_dir = tmp_path / "wf_out"
    assert run("workflow", "status", "--project", "demo", "--id", "w1",
               "--out-dir", str(out_dir), "--data-root", root) == 0
    assert (out_dir / "workflow_w1.tsv").exists()
    assert (out_dir / "workflow_w1.png").exists()

    assert run("workflow", "apply", "--project", "demo", "--id", "w1",
               "--data-root", root) == 0

    export_path = tmp_path / "cleaned.txt"
    assert run("export", "--project", "demo", "--out", str(export_path),
               "--data-root", root) == 0
    from labelforge import ingest_attribute_file, LabelValue

    cleaned = ingest_attribute_file(export_path, format="extended")
    wf = json.loads((tmp_path / "root" / "demo" / "workflows" / "w1.json").read_text())
    for image_id, flag in wf["cleaned_labels"].items():
        assert cleaned.value(image_id, "MSO") is LabelValue.from_bool(flag)


def test_pin_file_mode_matches_reference(tmp_path, capsys, pair_conflict_rows):
    # build a 2-image-per-pair dataset reproducing one reference row exactly
    row = next(r for r in pair_conflict_rows if r["attribute"] == "Male")
    n_differ, n_p = int(row["n_differ"]), int(row["n_p"])
    n_total = 5068
    rows, queue_lines = {}, ["pair_id\timage_a\timage_b\tsimilarity\tverdict\treviewer"]
    p_left = (n_p - n_differ) // 2
    made_p = 0
    for k in range(n_total):
        a, b = f"a{k:05d}", f"b{k:05d}"
        if k < n_differ:
            va, vb = 1, -1
        elif made_p < p_left:
            va = vb = 1
            made_p += 1
        else:
            va = vb = -1
        rows[a], rows[b] = [va], [vb]
        queue_lines.append(f"{a}:{b}\t{a}\t{b}\t0.950000\tDUPLICATE\t rev".replace(" rev", "rev"))
    attrs = write_attr_file(tmp_path / "labels.txt", ["Male"], rows)
    pairs = tmp_path / "pairs.tsv"
    pairs.write_text("\n".join(queue_lines) + "\n")
    assert run("pin", "--pairs", str(pairs), "--labels", str(attrs),
               "--format", "json-lines") == 0
    out = json.loads(capsys.readouterr().out.splitlines()[0])
    assert out["attribute"] == "Male"
    assert out["n_differ"] == n_differ
    assert out["p_in"] == pytest.approx(float(row["p_in"]), abs=1e-3)
