import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtnn.diagnostics import (DifficultyTrace, curve_auc,
                              inversion_fraction, inversion_heatmap, load_trace,
                              normalized_losses, trace_from_rows,
                              transition_profiles, write_diagnostics)
from gtnn.trace import TraceRow, read_trace, write_trace

from _oracles import (brute_heatmap, brute_inversion_fraction, brute_normalize,
                      brute_transitions, brute_trapezoid)


def make_trace(labels, losses=None, deltas=None):
    labels = np.asarray(labels, dtype=np.int8)
    E, S = labels.shape
    losses = np.asarray(losses, dtype=float) if losses is not None else np.ones((E, S))
    deltas = np.asarray(deltas, dtype=float) if deltas is not None else np.zeros((E, S))
    return DifficultyTrace(sample_ids=[f"s{j}" for j in range(S)], labels=labels,
                           losses=losses, deltas=deltas, sigmas=np.ones((E, S)))


def random_trace(seed, epochs=10, samples=4):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=(epochs, samples)).astype(np.int8)
    losses = rng.uniform(0.05, 3.0, size=(epochs, samples))
    deltas = rng.uniform(-1, 1, size=(epochs, samples))
    return make_trace(labels, losses, deltas)


class TestInversionFraction:
    def test_constant_labels(self):
        trace = make_trace(np.zeros((4, 3)))
        assert np.array_equal(inversion_fraction(trace), [0.0, 0.0, 0.0])

    def test_everything_flips(self):
        labels = np.array([[0, 1], [1, 0], [0, 1]])
        assert np.array_equal(inversion_fraction(make_trace(labels)), [1.0, 1.0])

    def test_scripted_counts(self):
        # 4 samples, 3 epochs: 1 flip then 2 flips
        labels = np.array([
            [0, 0, 1, 1],
            [0, 0, 1, 0],
            [1, 0, 0, 0],
        ])
        assert np.array_equal(inversion_fraction(make_trace(labels)), [0.25, 0.5])

    def test_needs_two_epochs(self):
        with pytest.raises(ValueError):
            inversion_fraction(make_trace(np.zeros((1, 3))))

    def test_matches_brute_force(self):
        trace = random_trace(0)
        assert np.allclose(inversion_fraction(trace),
                           brute_inversion_fraction(trace.labels))

    def test_equals_e2h_plus_h2e_event_counts(self):
        trace = random_trace(1)
        frac = inversion_fraction(trace)
        E, S = trace.labels.shape
        for e in range(1, E):
            e2h = np.sum((trace.labels[e - 1] == 0) & (trace.labels[e] == 1))
            h2e = np.sum((trace.labels[e - 1] == 1) & (trace.labels[e] == 0))
            assert frac[e - 1] == pytest.approx((e2h + h2e) / S)


class TestCurveAuc:
    def test_constant_one_over_three_epochs(self):
        assert curve_auc([1.0, 1.0, 1.0]) == 2.0

    def test_triangle(self):
        assert curve_auc([0.0, 1.0]) == 0.5

    def test_hand_trapezoid(self):
        assert curve_auc([0.2, 0.4, 0.1]) == pytest.approx(0.55)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        series = rng.uniform(0, 1, size=17)
        assert curve_auc(series) == pytest.approx(brute_trapezoid(series), abs=1e-15)

    @given(st.lists(st.floats(0, 10), min_size=2, max_size=20), st.floats(0, 5))
    @settings(max_examples=80)
    def test_linearity(self, series, a):
        assert curve_auc([a * x for x in series]) == pytest.approx(a * curve_auc(series), abs=1e-9)

    def test_too_short(self):
        with pytest.raises(ValueError):
            curve_auc([1.0])


class TestNormalizedLosses:
    def test_min_max_per_sample(self):
        losses = np.array([[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]])
        norm = normalized_losses(make_trace(np.zeros((3, 2)), losses))
        assert np.allclose(norm[:, 0], [0.0, 1.0, 0.5])
        assert np.all(norm[:, 1] == 0.0)  # constant loss -> 0

    def test_matches_brute_force(self):
        trace = random_trace(3)
        assert np.allclose(normalized_losses(trace), brute_normalize(trace.losses))


class TestTransitionProfiles:
    def test_flat_easy_sample_gives_flat_e2e(self):
        labels = np.zeros((5, 1), dtype=np.int8)
        losses = np.full((5, 1), 0.7)
        profiles = transition_profiles(make_trace(labels, losses), k=1)
        e2e = profiles["E2E"]
        assert e2e.n_events == 3
        assert np.allclose(e2e.mean_loss, 0.0)
        for kind in ("E2H", "H2E", "H2H"):
            assert profiles[kind].n_events == 0
            assert np.all(np.isnan(profiles[kind].mean_loss))

    def test_single_e2h_event_rises_across_zero(self):
        labels = np.array([[0], [0], [1], [1], [1]], dtype=np.int8)
        losses = np.array([[0.1], [0.2], [0.8], [0.9], [1.0]])
        profiles = transition_profiles(make_trace(labels, losses), k=1)
        e2h = profiles["E2H"]
        assert e2h.n_events == 1
        assert e2h.mean_loss[0] < e2h.mean_loss[1] < e2h.mean_loss[2]

    def test_matches_event_enumeration_oracle(self):
        trace = random_trace(4, epochs=10, samples=4)
        for k in (1, 2, 3):
            profiles = transition_profiles(trace, k)
            means, counts = brute_transitions(trace.labels, trace.losses, k)
            for kind in ("E2E", "E2H", "H2E", "H2H"):
                assert profiles[kind].n_events == counts[kind]
                got, want = profiles[kind].mean_loss, means[kind]
                assert np.allclose(got, want, equal_nan=True)

    def test_window_too_large(self):
        with pytest.raises(ValueError, match="epochs"):
            transition_profiles(random_trace(5, epochs=5), k=3)


class TestInversionHeatmap:
    def test_no_rising_deltas_all_zero(self):
        trace = make_trace(np.zeros((4, 3), dtype=np.int8),
                           deltas=-np.ones((4, 3)))
        result = inversion_heatmap(trace, "E2H_rising")
        upper = result.matrix[np.triu_indices(4, 1)]
        assert np.all(upper == 0.0)

    def test_scripted_diagonal_ones(self):
        # every easy-and-rising sample becomes hard next epoch
        labels = np.array([[0, 0], [1, 1], [0, 0], [1, 1]], dtype=np.int8)
        deltas = np.ones((4, 2))
        result = inversion_heatmap(make_trace(labels, deltas=deltas), "E2H_rising")
        assert np.allclose(result.consecutive, [1.0, 0.0, 1.0])
        # rows anchored at hard epochs have no eligible samples -> 0
        assert result.matrix[1, 2] == 0.0

    def test_matches_double_loop_oracle(self):
        for seed in range(3):
            trace = random_trace(seed + 10)
            for direction in ("E2H_rising", "H2E_falling"):
                result = inversion_heatmap(trace, direction)
                want = brute_heatmap(trace.labels, trace.deltas, direction)
                assert np.allclose(result.matrix, want, equal_nan=True)
                diag = [want[i, i + 1] for i in range(trace.n_epochs - 1)]
                assert np.allclose(result.consecutive, diag)
                assert result.auc == pytest.approx(brute_trapezoid(diag))

    def test_lower_triangle_undefined(self):
        result = inversion_heatmap(random_trace(20), "H2E_falling")
        E = result.matrix.shape[0]
        for i in range(E):
            for j in range(i + 1):
                assert np.isnan(result.matrix[i, j])

    def test_unknown_direction(self):
        with pytest.raises(ValueError):
            inversion_heatmap(random_trace(21), "sideways")


class TestTraceIO:
    def rows_for(self, trace):
        rows = []
        for e in range(trace.n_epochs):
            for j, sid in enumerate(trace.sample_ids):
                rows.append(TraceRow(epoch=e, sample_id=sid,
                                     loss=float(trace.losses[e, j]),
                                     delta=float(trace.deltas[e, j]),
                                     sigma=1.0,
                                     label="hard" if trace.labels[e, j] else "easy"))
        return rows

    def test_round_trip(self, tmp_path):
        trace = random_trace(30, epochs=4, samples=3)
        path = tmp_path / "trace.csv"
        write_trace(self.rows_for(trace), str(path))
        again = load_trace(str(path))
        assert again.sample_ids == trace.sample_ids
        assert np.array_equal(again.labels, trace.labels)
        assert np.allclose(again.losses, trace.losses)

    def test_rewrite_is_byte_identical(self, tmp_path):
        trace = random_trace(31, epochs=4, samples=3)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        rows = self.rows_for(trace)
        write_trace(rows, str(p1))
        write_trace(read_trace(str(p1)), str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_cell_detected(self):
        rows = [TraceRow(0, "a", 1.0, 0.0, 1.0, "easy"),
                TraceRow(0, "b", 1.0, 0.0, 1.0, "easy"),
                TraceRow(1, "a", 1.0, 0.0, 1.0, "easy")]
        with pytest.raises(ValueError, match="rectangular"):
            trace_from_rows(rows)

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("epoch,sample_id,loss,delta,sigma,label\n0,a,oops,0.0,1.0,easy\n",
                        encoding="utf-8")
        with pytest.raises(ValueError, match=":2"):
            load_trace(str(path))

    def test_write_diagnostics_deterministic(self, tmp_path):
        trace = random_trace(32, epochs=8, samples=5)
        d1, d2 = tmp_path / "d1", tmp_path / "d2"
        p1 = write_diagnostics(trace, str(d1), window=2)
        p2 = write_diagnostics(trace, str(d2), window=2)
        assert p1.keys() == p2.keys()
        for name in p1:
            b1 = open(p1[name], "rb").read()
            b2 = open(p2[name], "rb").read()
            assert b1 == b2
        assert set(p1) == {"inversion_fraction", "transition_E2E", "transition_E2H",
                           "transition_H2E", "transition_H2H", "heatmap_E2H_rising",
                           "heatmap_H2E_falling", "auc_summary"}
