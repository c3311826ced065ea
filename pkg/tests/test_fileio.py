import json

import numpy as np
import pytest

from otmanifold import ShapeError, SolverConfig
from otmanifold.fileio import (
    ConfigError,
    canonical_json,
    config_hash,
    load_matrix,
    load_problem,
    load_solver_config,
    load_vector,
    save_matrix,
    save_vector,
)


class TestMatrixIO:
    def test_text_roundtrip(self, tmp_path, rng):
        M = rng.standard_normal((3, 5))
        path = tmp_path / "m.txt"
        save_matrix(path, M)
        np.testing.assert_array_equal(load_matrix(path), M)

    def test_json_roundtrip(self, tmp_path, rng):
        M = rng.standard_normal((4, 2))
        path = tmp_path / "m.json"
        save_matrix(path, M)
        np.testing.assert_array_equal(load_matrix(path), M)

    def test_text_comments_skipped(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("# a comment\n2 2\n1 2\n3 4\n")
        np.testing.assert_array_equal(load_matrix(path),
                                      [[1.0, 2.0], [3.0, 4.0]])

    def test_raw_json_array_accepted(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("[[1, 2], [3, 4]]")
        np.testing.assert_array_equal(load_matrix(path),
                                      [[1.0, 2.0], [3.0, 4.0]])

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("2 3\n1 2 3\n")
        with pytest.raises(ShapeError):
            load_matrix(path)

    def test_header_comment_embedded(self, tmp_path):
        path = tmp_path / "m.txt"
        save_matrix(path, np.eye(2), header_comment="config_hash=abc seed=1")
        assert path.read_text().startswith("# config_hash=abc seed=1")
        np.testing.assert_array_equal(load_matrix(path), np.eye(2))

    def test_vector_roundtrip(self, tmp_path):
        v = np.array([1.5, -2.0, 3.25])
        for name in ("v.txt", "v.json"):
            path = tmp_path / name
            save_vector(path, v)
            np.testing.assert_array_equal(load_vector(path), v)

    def test_flat_json_vector(self, tmp_path):
        path = tmp_path / "v.json"
        path.write_text("[1, 2, 3]")
        np.testing.assert_array_equal(load_vector(path), [1.0, 2.0, 3.0])


class TestHashing:
    def test_canonical_json_sorts_keys(self):
        assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'

    def test_hash_deterministic(self):
        h1 = config_hash({"x": [1, 2], "y": "z"})
        h2 = config_hash({"y": "z", "x": [1, 2]})
        assert h1 == h2
        assert len(h1) == 16


class TestLoadProblem:
    def test_classic_inline(self, synth85):
        p, q, C = synth85
        pr = load_problem({
            "variant": "classic",
            "p": p.tolist(), "q": q.tolist(), "cost": C.tolist(),
        })
        assert pr.variant == "classic"
        np.testing.assert_array_equal(pr.cost, C)

    def test_entropic_with_files(self, tmp_path, synth85):
        p, q, C = synth85
        save_vector(tmp_path / "p.txt", p)
        save_vector(tmp_path / "q.json", q)
        save_matrix(tmp_path / "cost.txt", C)
        desc = {
            "variant": "entropic",
            "p": "p.txt", "q": "q.json", "cost": "cost.txt",
            "params": {"lam": 0.5},
        }
        path = tmp_path / "problem.json"
        path.write_text(json.dumps(desc))
        pr = load_problem(str(path))
        assert pr.variant == "entropic"
        assert pr.params.lam == 0.5
        np.testing.assert_array_equal(pr.cost, C)

    def test_space_overrides(self, synth85):
        p, q, C = synth85
        pr = load_problem({
            "variant": "classic", "p": p.tolist(), "q": q.tolist(),
            "cost": C.tolist(), "space": {"positivity_floor": 1e-200},
        })
        assert pr.space.positivity_floor == 1e-200

    def test_order_preserving_from_files(self, tmp_path, rng):
        U = rng.standard_normal((5, 2))
        V = rng.standard_normal((7, 2))
        save_matrix(tmp_path / "u.txt", U)
        save_matrix(tmp_path / "v.txt", V)
        pr = load_problem({"variant": "order_preserving",
                           "U": "u.txt", "V": "v.txt",
                           "params": {"sigma": 2.0}},
                          base_dir=str(tmp_path))
        assert pr.variant == "order_preserving"
        assert pr.params.sigma == 2.0
        assert pr.space.shape == (5, 7)

    def test_laplacian_da_inline(self, rng):
        P_s = rng.standard_normal((2, 4)).tolist()
        P_t = rng.standard_normal((2, 5)).tolist()
        pr = load_problem({
            "variant": "laplacian_da", "P_s": P_s, "P_t": P_t,
            "params": {"lam": 0.1, "laplacian_weight": 0.0},
        })
        assert pr.variant == "laplacian_da"
        assert pr.space.shape == (4, 5)

    def test_missing_key_names_field(self):
        with pytest.raises(ConfigError) as exc:
            load_problem({"variant": "classic", "p": [1, 1], "q": [1, 1]})
        assert exc.value.field == "cost"

    def test_unknown_variant(self):
        with pytest.raises(ConfigError) as exc:
            load_problem({"variant": "mystery"})
        assert exc.value.field == "variant"

    def test_missing_file_reference(self, tmp_path):
        with pytest.raises(ConfigError):
            load_problem({"variant": "classic", "p": "nope.txt",
                          "q": [1, 1], "cost": [[1, 1], [1, 1]]},
                         base_dir=str(tmp_path))


class TestSolverConfigIO:
    def test_default_when_none(self):
        assert load_solver_config(None) == SolverConfig()

    def test_dict(self):
        cfg = load_solver_config({"max_iter": 10, "grad_tol": 1e-3})
        assert cfg.max_iter == 10 and cfg.grad_tol == 1e-3

    def test_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"initial_step": 2.0}')
        assert load_solver_config(str(path)).initial_step == 2.0

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError) as exc:
            load_solver_config({"stepsize": 1.0})
        assert "stepsize" in str(exc.value)

    def test_invalid_value_rejected(self):
        with pytest.raises(ConfigError):
            load_solver_config({"armijo_c": 2.0})
