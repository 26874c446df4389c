import io
import json
import socket
import threading
import time

import httpx
import pytest

from granubot.cli import main
from granubot.policy import PolicyBuildConfig, bootstrap_n
from granubot.registry import type_matrices
from granubot.synth import fixture_catalog


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def built_store(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    catalog = root / "catalog.csv"
    store = root / "store"
    assert run(["gen-data", "--preset", "fixture", "--out", str(catalog)]) == 0
    assert run(["build", "--catalog", str(catalog), "--store", str(store)]) == 0
    return root, catalog, store


class TestGenData:
    def test_paper_preset_writes_catalog(self, tmp_path):
        out = tmp_path / "paper.csv"
        assert run(["gen-data", "--out", str(out), "--seed", "1"]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("provider_id,service_type")
        assert len(lines) == 828  # header + 827 providers

    def test_fixture_preset(self, tmp_path):
        out = tmp_path / "fixture.csv"
        assert run(["gen-data", "--preset", "fixture", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 249


class TestBuild:
    def test_store_layout(self, built_store):
        _, _, store = built_store
        assert (store / "meta.json").exists()
        assert (store / "kg_triples.tsv").exists()
        assert (store / "catalog.csv").exists()
        trees = sorted(p.name for p in (store / "trees").glob("*.json"))
        assert trees == [
            "housekeeping.grc.json", "housekeeping.kmeans.json",
            "nursery_teacher.grc.json", "nursery_teacher.kmeans.json",
        ]

    def test_build_is_deterministic(self, built_store, tmp_path):
        _, catalog, store = built_store
        other = tmp_path / "store2"
        assert run(["build", "--catalog", str(catalog), "--store", str(other)]) == 0
        for name in ("housekeeping.grc.json", "nursery_teacher.kmeans.json"):
            assert (store / "trees" / name).read_bytes() == (other / "trees" / name).read_bytes()

    def test_single_strategy_build(self, built_store, tmp_path):
        _, catalog, _ = built_store
        store = tmp_path / "km_only"
        assert run(["build", "--catalog", str(catalog), "--store", str(store),
                    "--strategy", "kmeans"]) == 0
        names = [p.name for p in (store / "trees").glob("*.json")]
        assert names and all("kmeans" in n for n in names)
        doc = json.loads((store / "trees" / names[0]).read_text())
        assert doc["strategy"] == "kmeans"

    def test_auto_n_matches_direct_bootstrap(self, built_store, tmp_path, capsys):
        _, catalog, _ = built_store
        store = tmp_path / "auto"
        assert run(["build", "--catalog", str(catalog), "--store", str(store),
                    "--strategy", "grc", "--auto-n", "--x", "8"]) == 0
        out = capsys.readouterr().out
        matrices = type_matrices(fixture_catalog().table)
        for service_type, matrix in matrices.items():
            expected = bootstrap_n(matrix, 8, PolicyBuildConfig(x=8, seed=1))
            assert f"{service_type} [grc]: N={expected}" in out

    def test_missing_catalog_fails(self, tmp_path):
        assert run(["build", "--catalog", str(tmp_path / "nope.csv"),
                    "--store", str(tmp_path / "s")]) == 1


class TestSimulate:
    def test_reports_written(self, built_store, tmp_path):
        _, _, store = built_store
        out = tmp_path / "reports"
        assert run(["simulate", "--store", str(store), "--out", str(out)]) == 0
        assert (out / "simulation.grc.txt").exists()
        assert (out / "simulation.kmeans.txt").exists()
        assert (out / "comparison.txt").exists()
        assert (out / "comparison.grc.curve.tsv").exists()
        assert (out / "comparison.curves.png").exists()

    def test_simulate_without_store_fails(self, tmp_path):
        assert run(["simulate", "--store", str(tmp_path / "missing")]) == 1

    def test_check_passes_on_paper_catalog(self, tmp_path):
        catalog = tmp_path / "paper.csv"
        store = tmp_path / "store"
        assert run(["gen-data", "--out", str(catalog), "--seed", "1"]) == 0
        assert run(["build", "--catalog", str(catalog), "--store", str(store)]) == 0
        assert run(["simulate", "--store", str(store), "--check"]) == 0


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class TestChatClient:
    def test_chat_against_live_server(self, built_store, monkeypatch, capsys):
        import uvicorn

        from granubot.registry import load_registry
        from granubot.service import create_app

        _, _, store = built_store
        registry = load_registry(store)
        port = _free_port()
        server = uvicorn.Server(
            uvicorn.Config(create_app(registry, session_ttl=60.0),
                           host="127.0.0.1", port=port, log_level="error")
        )
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        base = f"http://127.0.0.1:{port}"
        for _ in range(100):
            try:
                httpx.get(base + "/health", timeout=1.0)
                break
            except Exception:
                time.sleep(0.05)

        script = "Please help me to arrange a young woman housekeeper with low price\n" \
                 "under 5 years experience\nquit\n"
        monkeypatch.setattr("sys.stdin", io.StringIO(script))
        assert run(["chat", "--url", base]) == 0
        out = capsys.readouterr().out
        assert "What are the experience restricts?" in out
        assert "Prepare" in out
        server.should_exit = True
        thread.join(timeout=5)
