"""End-to-end command-line workflows on temporary corpora."""

import re

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from warplda import load_checkpoint, load_metrics
from warplda.cli import THREADS_ENV, run

from conftest import make_random_corpus, planted_corpus, write_uci


@pytest.fixture
def uci_corpus(rng, tmp_path):
    corpus = make_random_corpus(rng, docs=25, vocab=12, min_len=3, max_len=20)
    dw, vc = tmp_path / "docword.txt", tmp_path / "vocab.txt"
    write_uci(corpus, dw, vc)
    return corpus, dw, vc


def train_args(dw, vc, **extra):
    args = ["train", "--docword", str(dw), "--vocab", str(vc),
            "--topics", "4", "--iterations", "3", "--seed", "7"]
    for flag, value in extra.items():
        args += [f"--{flag}", str(value)]
    return args


class TestTrainCommand:
    def test_trains_and_reports(self, uci_corpus, tmp_path, capsys):
        corpus, dw, vc = uci_corpus
        metrics = tmp_path / "metrics.jsonl"
        ckpt = tmp_path / "model.ckpt"
        code = run(train_args(dw, vc, metrics=metrics, checkpoint=ckpt))
        assert code == 0
        out = capsys.readouterr().out
        m = re.fullmatch(
            rf"trained 4 topics on {corpus.token_total} tokens in 3 "
            rf"iterations, log_likelihood (-?\d+\.\d{{6}})\n", out)
        assert m, out
        with open(metrics) as f:
            rows = load_metrics(f)
        assert [r.iteration for r in rows] == [1, 2, 3]
        loaded = load_checkpoint(ckpt)
        assert loaded.topics == 4
        assert loaded.vocab == corpus.vocab

    def test_eval_recomputes_final_score(self, uci_corpus, tmp_path, capsys):
        _, dw, vc = uci_corpus
        ckpt = tmp_path / "model.ckpt"
        assert run(train_args(dw, vc, checkpoint=ckpt)) == 0
        trained = float(capsys.readouterr().out.rsplit(" ", 1)[1])
        assert run(["eval", "--checkpoint", str(ckpt)]) == 0
        out = capsys.readouterr().out
        m = re.fullmatch(r"iteration 3 log_likelihood (-?\d+\.\d{6})\n", out)
        assert m, out
        assert float(m.group(1)) == pytest.approx(trained, rel=1e-9)

    def test_thread_env_override_keeps_results_identical(
            self, uci_corpus, tmp_path, capsys, monkeypatch):
        _, dw, vc = uci_corpus
        one = tmp_path / "one.ckpt"
        many = tmp_path / "many.ckpt"
        assert run(train_args(dw, vc, checkpoint=one, threads=1)) == 0
        monkeypatch.setenv(THREADS_ENV, "3")
        assert run(train_args(dw, vc, checkpoint=many, threads=1)) == 0
        capsys.readouterr()
        assert one.read_bytes() == many.read_bytes()

    def test_gzipped_corpus(self, rng, tmp_path, capsys):
        corpus = make_random_corpus(rng, docs=10, vocab=6)
        dw, vc = tmp_path / "docword.gz", tmp_path / "vocab.gz"
        write_uci(corpus, dw, vc, compress=True)
        assert run(train_args(dw, vc)) == 0
        assert "trained 4 topics" in capsys.readouterr().out


class TestTopicsCommand:
    def test_tsv_shape_and_ordering(self, uci_corpus, tmp_path, capsys):
        _, dw, vc = uci_corpus
        ckpt = tmp_path / "model.ckpt"
        assert run(train_args(dw, vc, checkpoint=ckpt)) == 0
        capsys.readouterr()
        assert run(["topics", "--checkpoint", str(ckpt), "--top", "3"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 4 * 3
        by_topic = {}
        for line in lines:
            k, word, prob = line.split("\t")
            by_topic.setdefault(int(k), []).append((word, float(prob)))
        assert sorted(by_topic) == [0, 1, 2, 3]
        for k, entries in by_topic.items():
            probs = [p for _, p in entries]
            assert probs == sorted(probs, reverse=True)
            assert all(0 <= p <= 1 for p in probs)

    def test_out_file(self, uci_corpus, tmp_path, capsys):
        _, dw, vc = uci_corpus
        ckpt = tmp_path / "model.ckpt"
        assert run(train_args(dw, vc, checkpoint=ckpt)) == 0
        dest = tmp_path / "topics.tsv"
        assert run(["topics", "--checkpoint", str(ckpt), "--top", "2",
                    "--out", str(dest)]) == 0
        assert len(dest.read_text().splitlines()) == 8

    def test_recovers_planted_topics(self, rng, tmp_path, capsys):
        """Top learned words align with the planted topics' top words."""
        corpus, phi = planted_corpus(rng, topics=3, docs=80, vocab=30,
                                     mean_len=50)
        dw, vc = tmp_path / "docword.txt", tmp_path / "vocab.txt"
        write_uci(corpus, dw, vc)
        ckpt = tmp_path / "model.ckpt"
        code = run(["train", "--docword", str(dw), "--vocab", str(vc),
                    "--topics", "3", "--iterations", "40", "--seed", "5",
                    "--alpha", "0.5", "--beta", "0.1",
                    "--checkpoint", str(ckpt)])
        assert code == 0
        capsys.readouterr()
        assert run(["topics", "--checkpoint", str(ckpt), "--top", "3"]) == 0
        lines = capsys.readouterr().out.splitlines()
        learned = {k: set() for k in range(3)}
        for line in lines:
            k, word, _ = line.split("\t")
            learned[int(k)].add(word)
        planted = [set(corpus.vocab[w] for w in np.argsort(-phi[k])[:3])
                   for k in range(3)]
        overlap = np.array([[len(learned[i] & planted[j]) for j in range(3)]
                            for i in range(3)])
        rows, cols = linear_sum_assignment(-overlap)
        assert all(overlap[i, j] >= 2 for i, j in zip(rows, cols))


class TestPartitionBenchCommand:
    def test_synthetic_weights_output_format(self, capsys):
        code = run(["partition-bench", "--items", "500", "--workers", "2,4",
                    "--shuffles", "3", "--seed", "1"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "workers\tgreedy\tstatic\tdynamic"
        assert len(lines) == 3
        for line, workers in zip(lines[1:], (2, 4)):
            cells = line.split("\t")
            assert cells[0] == str(workers)
            values = [float(c) for c in cells[1:]]
            assert len(values) == 3
            assert all(v >= 0 for v in values)

    def test_docword_weights(self, tmp_path, capsys):
        dw = tmp_path / "docword.txt"
        dw.write_text("2\n2\n2\n1 1 1\n2 2 3\n")
        code = run(["partition-bench", "--docword", str(dw), "--workers", "1",
                    "--shuffles", "1"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[1] == "1\t0.000000\t0.000000\t0.000000"


class TestErrorPaths:
    def test_missing_file_exits_1(self, tmp_path, capsys):
        code = run(["train", "--docword", str(tmp_path / "nope.txt"),
                    "--vocab", str(tmp_path / "nope2.txt"),
                    "--topics", "2", "--iterations", "1"])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_malformed_corpus_exits_1(self, tmp_path, capsys):
        dw = tmp_path / "docword.txt"
        vc = tmp_path / "vocab.txt"
        dw.write_text("1\n1\nbad header\n")
        vc.write_text("a\n")
        code = run(["train", "--docword", str(dw), "--vocab", str(vc),
                    "--topics", "2", "--iterations", "1"])
        assert code == 1
        assert "malformed corpus" in capsys.readouterr().err

    def test_invalid_config_exits_1(self, uci_corpus, capsys):
        _, dw, vc = uci_corpus
        code = run(["train", "--docword", str(dw), "--vocab", str(vc),
                    "--topics", "0", "--iterations", "1"])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["train", "--bogus"])
        assert exc.value.code == 2

    def test_bad_checkpoint_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"garbage!")
        assert run(["eval", "--checkpoint", str(bad)]) == 1
        assert "error:" in capsys.readouterr().err
