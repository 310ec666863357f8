import csv
import math

import numpy as np
import pytest

from fourier_control.capsule import (
    CapsuleParams, CapsuleState, MotionPhase, nondimensionalize, progression_cost, simulate,
    slip_accelerations, stick_accelerations, stick_break_check)
from fourier_control.errors import ContactLossError, DomainError, ModelSingularityError
from fourier_control.parametrization import (
    ControlSpec, FourierSeriesControl, build_control, eval_control)

P = CapsuleParams()
REST = CapsuleState()


def slip_oracle(theta, theta_dot, u, p, s):
    """Solve the inertia system with f_z = mu s r_y by direct elimination."""
    # r_y = g1 - thdd sin(theta) - theta_dot^2 cos(theta), g1 = gamma + 1
    st, ct = math.sin(theta), math.cos(theta)
    g1 = p.gamma + 1.0
    A = np.array([[1.0, -ct], [-ct - p.mu * s * st, g1]])
    rhs = np.array([st - p.rho * theta - p.nu * theta_dot + u,
                    -theta_dot**2 * st - p.mu * s * (g1 - theta_dot**2 * ct)])
    thdd, zdd = np.linalg.solve(A, rhs)
    return thdd, zdd


def row_residuals(state, u, p, thdd, zdd, f_z):
    th, w = state.theta, state.theta_dot
    r1 = thdd - math.cos(th) * zdd - (math.sin(th) - p.rho * th - p.nu * w + u)
    r2 = -math.cos(th) * thdd + (p.gamma + 1) * zdd - (-w**2 * math.sin(th) - f_z)
    return r1, r2


class TestStick:
    def test_rest(self):
        thdd, zdd, f = stick_accelerations(REST, 0.0, P)
        assert (thdd, zdd, f.r_z, f.r_y) == (0.0, 0.0, 0.0, 11.0)

    def test_unit_torque(self):
        thdd, _, f = stick_accelerations(REST, 1.0, P)
        assert thdd == 1.0 and f.r_z == 1.0 and f.f_z == 1.0

    def test_spinning(self):
        thdd, _, f = stick_accelerations(CapsuleState(theta_dot=1.0), 0.0, P)
        assert thdd == -1.0 and f.r_z == -1.0

    def test_requires_zero_velocity(self):
        with pytest.raises(DomainError):
            stick_accelerations(CapsuleState(z_dot=0.1), 0.0, P)

    def test_contact_loss(self):
        # large centripetal term lifts the capsule
        with pytest.raises(ContactLossError):
            stick_accelerations(CapsuleState(theta_dot=5.0), 0.0, P)


class TestSlip:
    def test_frictionless_rest(self):
        thdd, zdd, _ = slip_accelerations(REST, 0.0, CapsuleParams(mu=1e-300), +1)
        assert abs(thdd) < 1e-15 and abs(zdd) < 1e-15

    def test_hand_solved(self):
        thdd, zdd, f = slip_accelerations(REST, 0.0, P, +1)
        assert thdd == pytest.approx(-0.33, abs=1e-14)
        assert zdd == pytest.approx(-0.33, abs=1e-14)
        assert f.f_z == pytest.approx(0.3 * f.r_y)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_oracle_and_back_substitutes(self, seed):
        rng = np.random.default_rng(seed)
        state = CapsuleState(theta=rng.uniform(-1.5, 1.5), theta_dot=rng.uniform(-2, 2),
                             z_dot=rng.uniform(-1, 1))
        u, s = rng.uniform(-4, 4), int(rng.choice([-1, 1]))
        thdd, zdd, f = slip_accelerations(state, u, P, s)
        o_thdd, o_zdd = slip_oracle(state.theta, state.theta_dot, u, P, s)
        assert thdd == pytest.approx(o_thdd, abs=1e-12)
        assert zdd == pytest.approx(o_zdd, abs=1e-12)
        r1, r2 = row_residuals(state, u, P, thdd, zdd, f.f_z)
        assert abs(r1) < 1e-10 and abs(r2) < 1e-10
        r_y = P.gamma + 1 - thdd * math.sin(state.theta) - state.theta_dot**2 * math.cos(state.theta)
        assert f.r_y == pytest.approx(r_y, abs=1e-12)
        assert f.f_z == pytest.approx(P.mu * s * r_y, abs=1e-12)

    def test_bad_direction(self):
        with pytest.raises(DomainError):
            slip_accelerations(REST, 0.0, P, 0)

    def test_singular(self):
        # det = gamma + 1 - cos^2 - mu s sin cos; pick mu so it vanishes at theta = pi/4
        th = math.pi / 4
        p = CapsuleParams(mu=(0.1 + 1 - 0.5) / 0.5, gamma=0.1)
        with pytest.raises(ModelSingularityError):
            slip_accelerations(CapsuleState(theta=th), 0.0, p, +1)


class TestBreakaway:
    def test_rest_holds(self):
        assert stick_break_check(REST, 0.0, P) is None

    @pytest.mark.parametrize("u, expected", [(4.0, 1), (-4.0, -1), (3.0, None)])
    def test_direction(self, u, expected):
        _, _, f = stick_accelerations(REST, u, P)
        assert (abs(f.r_z) >= P.mu * f.r_y) == (expected is not None)
        assert stick_break_check(REST, u, P) == expected

    def test_boundary_is_inclusive(self):
        p = CapsuleParams(mu=0.25, gamma=3.0)  # r_y = 4 at rest, threshold exactly 1
        assert stick_break_check(REST, 1.0, p) == 1
        assert stick_break_check(REST, math.nextafter(1.0, 0.0), p) is None


class TestNondimensionalize:
    def test_inverts(self):
        g = 9.81
        params, scales = nondimensionalize(M=10, m=1, l=g, k=2.5 * g**2, c=1.0 * g**2, g=g, mu=0.3)
        assert params.gamma == pytest.approx(10.0)
        assert params.rho == pytest.approx(2.5)
        assert params.nu == pytest.approx(1.0)
        assert scales.Omega == pytest.approx(1.0) and scales.time == pytest.approx(1.0)

    def test_mass_ratio(self):
        a, _ = nondimensionalize(3, 2, 1, 1, 1, 9.81, 0.3)
        b, _ = nondimensionalize(6, 4, 1, 1, 1, 9.81, 0.3)
        assert a.gamma == b.gamma

    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            nondimensionalize(1, 1, 0, 1, 1, 9.81, 0.3)


def test_params_validation():
    with pytest.raises(DomainError):
        CapsuleParams(mu=-0.1)


def random_controls(n, seed, K_max=3):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        K = int(rng.integers(1, K_max + 1))
        phi = list(rng.uniform(0, math.pi, 2 * K - 2)) + [rng.uniform(0, 2 * math.pi)]
        spec = ControlSpec.create(phi, rng.uniform(0.05, 1), rng.uniform(0.05, 1),
                                  rng.uniform(2 * math.pi / 100, 10), -4.0, 4.0)
        out.append(build_control(spec))
    return out


def safe_simulate(ctrl, **kw):
    try:
        return simulate(ctrl, **kw)
    except ContactLossError:
        return None


class TestSimulate:
    def test_rest_is_equilibrium(self):
        # narrowest admissible span centred on zero
        spec = ControlSpec.create([math.pi / 2], 0.5 + 2.5e-10, 1e-9, 10.0, -4.0, 4.0)
        ctrl = build_control(spec)
        assert max(map(abs, ctrl.amplitude_vector())) < 1e-8
        tr = simulate(ctrl)
        assert abs(tr.z_end) < 1e-9 and np.max(np.abs(tr.theta)) < 1e-9
        assert tr.events == [] and abs(tr.cost_J) < 1e-9

    def test_sine_has_both_phases(self):
        tr = simulate(FourierSeriesControl(0.0, (0.0,), (4.0,), 1.0))
        assert {"stick", "slip+", "slip-"} >= {MotionPhase(int(v)).label for v in tr.phase}
        assert (tr.phase == 0).any() and (tr.phase != 0).any()

    def test_time_grid(self):
        tr = simulate(FourierSeriesControl(0.0, (0.0,), (4.0,), 1.0), n_samples=500)
        assert tr.tau[0] == 0.0 and tr.tau[-1] == 100.0
        assert np.all(np.diff(tr.tau) > 0)
        event_times = {t for t, _ in tr.events}
        assert event_times <= set(tr.tau.tolist())
        grid = set(np.linspace(0.0, 100.0, 500).tolist())
        assert set(tr.tau.tolist()) <= grid | event_times
        assert len(grid - set(tr.tau.tolist())) <= 1

    def test_cost_definition(self):
        ctrl = FourierSeriesControl(0.0, (0.0,), (4.0,), 0.8)
        tr = simulate(ctrl)
        assert tr.cost_J == -abs(tr.z[-1] - tr.z[0]) < 0
        assert progression_cost(ctrl) == tr.cost_J

    def test_deterministic(self):
        c = random_controls(1, 11)[0]
        a, b = safe_simulate(c), safe_simulate(c)
        assert a is not None
        assert a.z.tobytes() == b.z.tobytes()

    def test_interval_validation(self):
        with pytest.raises(DomainError):
            simulate(FourierSeriesControl(0.0, (1.0,), (0.0,), 1.0), tau0=5.0, tau_f=5.0)

    def test_contact_loss_carries_events(self):
        # strong fast forcing lifts the capsule off the ground
        ctrl = FourierSeriesControl(0.0, (0.0,), (40.0,), 3.0)
        with pytest.raises(ContactLossError) as info:
            simulate(ctrl)
        assert info.value.tau > 0.0


@pytest.fixture(scope="module")
def trajectories():
    out = []
    for c in random_controls(12, 2024):
        tr = safe_simulate(c)
        if tr is not None:
            out.append((c, tr))
    assert len(out) >= 8
    return out


def test_friction_cone(trajectories):
    for _, tr in trajectories:
        assert np.all(np.abs(tr.f_z) <= P.mu * tr.r_y + 1e-9)


def test_stick_means_stuck(trajectories):
    for _, tr in trajectories:
        for i, j in tr.stick_segments():
            assert np.ptp(tr.z[i:j]) < 1e-9
            assert np.all(tr.z_dot[i:j] == 0.0)


def test_slip_consistency(trajectories):
    for _, tr in trajectories:
        slip = tr.phase != 0
        event_times = {t for t, _ in tr.events}
        interior = slip & ~np.isin(tr.tau, list(event_times))
        assert np.all(np.sign(tr.z_dot[interior]) == tr.phase[interior])
        np.testing.assert_allclose(tr.f_z[slip], P.mu * tr.r_y[slip] * tr.phase[slip],
                                   rtol=1e-12, atol=1e-12)


def test_event_residuals(trajectories):
    for ctrl, tr in trajectories:
        for tau, kind in tr.events:
            if tau == 0.0:
                continue  # breakaway from the initial state is not a located crossing
            i = int(np.searchsorted(tr.tau, tau))
            state = CapsuleState(tau, tr.theta[i], tr.theta_dot[i], tr.z[i], 0.0)
            u = float(eval_control(ctrl, tau))
            if kind == "stick_to_slip":
                _, _, f = stick_accelerations(state, u, P)
                assert abs(abs(f.r_z) - P.mu * f.r_y) < 1e-8
            else:
                assert tr.z_dot[i] == 0.0 or abs(tr.z_dot[i]) < 1e-10


def test_symmetry(trajectories):
    for ctrl, tr in trajectories[:4]:
        neg = simulate(ctrl.negated())
        np.testing.assert_allclose(neg.z, -tr.z, atol=1e-6)
        np.testing.assert_allclose(neg.theta, -tr.theta, atol=1e-6)


def test_csv_format(tmp_path, trajectories):
    _, tr = trajectories[0]
    tr.write_csv(tmp_path / "t.csv", tmp_path / "e.csv")
    with (tmp_path / "t.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["tau", "theta", "theta_dot", "z", "z_dot", "f_z", "r_y", "phase"]
    assert len(rows) == tr.tau.size + 1
    assert {r[7] for r in rows[1:]} <= {"stick", "slip+", "slip-"}
    assert float(rows[-1][3]) == tr.z[-1]
    with (tmp_path / "e.csv").open() as fh:
        ev = list(csv.reader(fh))
    assert ev[0] == ["tau", "kind"] and len(ev) == len(tr.events) + 1
