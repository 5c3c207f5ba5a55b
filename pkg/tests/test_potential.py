import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticemd import synthetic
from latticemd.errors import DomainError, ParseError
from latticemd.potential import (
    EamPotential,
    build_spline,
    build_spline_from_points,
    parse_potential_file,
    spline_eval,
    write_potential_file,
)


def table_pot(f_fn, rho_fn, z_fn, n=200, rho_max=10.0, cutoff=5.0):
    drho = rho_max / (n - 1)
    dr = cutoff / n
    rg = np.arange(n) * drho
    r = np.arange(n) * dr
    return EamPotential(
        atomic_number=26, mass=55.845, a0=2.8553, lattice="bcc",
        F=build_spline(f_fn(rg), drho), rho=build_spline(rho_fn(r), dr),
        rphi=build_spline(z_fn(r), dr), cutoff=cutoff,
    )


def write_tables(path, F, rphi, rho, drho=0.01, dr=0.001, **kw):
    write_potential_file(path, comment="test", atomic_number=26, mass=55.845, a0=2.8553,
                         lattice="bcc", drho=drho, dr=dr, cutoff=len(rho) * dr,
                         F=F, rphi=rphi, rho=rho, **kw)


class TestBuildSpline:
    def test_linear_reproduction(self):
        x = np.linspace(0, 3, 31)
        t = build_spline(2 * x + 1, x[1] - x[0])
        a, b, c, d, e, f, g = t.coeffs.T
        assert np.allclose(a, 0, atol=1e-11) and np.allclose(b, 0, atol=1e-11)
        assert np.allclose(c, 2) and np.allclose(d, 2 * x[:-1] + 1)
        _, der = t(np.linspace(0, 3, 500))
        assert np.allclose(der, 2.0)

    def test_cubic_reproduction(self):
        x = np.linspace(0, 1, 101)
        t = build_spline(x ** 3, x[1] - x[0])
        probe = np.linspace(0, 1, 10_000)
        v, d = t(probe)
        assert np.max(np.abs(v - probe ** 3)) <= 1e-6
        assert np.max(np.abs(d - 3 * probe ** 2)) <= 1e-6

    def test_sine_derivative(self):
        x = np.linspace(0, 2 * np.pi, 5000)
        t = build_spline(np.sin(x), x[1] - x[0])
        probe = np.linspace(0, 2 * np.pi, 20_000)
        _, d = t(probe)
        assert np.max(np.abs(d - np.cos(probe))) <= 1e-6

    def test_derivative_coefficients(self, rng):
        t = build_spline(rng.normal(size=50), 0.3)
        a, b, c, _, e, f, g = t.coeffs.T
        assert np.array_equal(e, 3 * a)
        assert np.array_equal(f, 2 * b)
        assert np.array_equal(g, c)

    @settings(max_examples=50)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=60), st.floats(1e-3, 10.0))
    def test_knot_exact_and_c1(self, ys, h):
        y = np.array(ys)
        t = build_spline(y, h)
        a, b, c, d = t.coeffs[:, :4].T
        scale = max(1.0, np.abs(y).max())
        assert np.array_equal(d, y[:-1])
        end = ((a * h + b) * h + c) * h + d
        assert np.max(np.abs(end - y[1:])) <= 1e-10 * scale
        # slope continuity at interior knots
        slope_end = (3 * a * h + 2 * b) * h + c
        assert np.max(np.abs(slope_end[:-1] - c[1:])) <= 1e-9 * scale / min(h, 1.0)

    def test_too_few_knots(self):
        with pytest.raises(ValueError):
            build_spline([1.0, 2.0, 3.0], 1.0)

    def test_nonuniform_rejected(self):
        with pytest.raises(ValueError, match="uniform"):
            build_spline_from_points([0.0, 1.0, 2.0, 3.1], [0, 1, 2, 3])
        t = build_spline_from_points(np.linspace(2, 3, 11), np.linspace(2, 3, 11))
        assert t.x0 == 2.0


class TestEval:
    t = build_spline(np.exp(np.linspace(0, 2, 401)), 2 / 400)

    def test_knots(self):
        x = np.linspace(0, 2, 401)
        v, _ = self.t(x)
        assert np.max(np.abs(v - np.exp(x)) / np.exp(x)) <= 1e-10

    def test_clamp(self):
        v_end, d_end = self.t(2.0)
        assert self.t(5.0) == pytest.approx((v_end, d_end), rel=1e-14)
        v0, d0 = self.t(0.0)
        assert self.t(-1.0) == (v0, d0)

    def test_scalar_kernel(self):
        assert spline_eval(self.t.coeffs, self.t.x0, self.t.h, 0.37) == self.t(0.37)

    def test_finite_difference(self, rng):
        xs = rng.uniform(0.01, 1.99, 1000)
        delta = 1e-6 * self.t.h * 1e3  # still far below the knot spacing
        vp, _ = self.t(xs + delta)
        vm, _ = self.t(xs - delta)
        _, d = self.t(xs)
        fd = (vp - vm) / (2 * delta)
        assert np.max(np.abs(fd - d) / np.abs(d)) <= 1e-6


class TestPairTerm:
    def test_constant_phi(self):
        pot = table_pot(lambda x: x, np.zeros_like, lambda r: r)
        r = np.arange(1, 200) * pot.dr
        phi, dphi = pot.phi_and_dphi(r)
        assert np.allclose(phi, 1.0, atol=1e-12)
        assert np.allclose(dphi, 0.0, atol=1e-10)

    def test_linear_phi(self, rng):
        pot = table_pot(lambda x: x, np.zeros_like, lambda r: r ** 2)
        r = rng.uniform(0.1, pot.rphi.x_end, 500)
        phi, dphi = pot.phi_and_dphi(r)
        assert np.max(np.abs(phi - r)) <= 1e-8
        assert np.max(np.abs(dphi - 1.0)) <= 1e-8

    def test_nonpositive_distance(self):
        pot = table_pot(lambda x: x, np.zeros_like, lambda r: r)
        with pytest.raises(DomainError):
            pot.phi_and_dphi(0.0)

    def test_tail_vanishes(self, pot):
        # the last knot sits one dr inside the cutoff; beyond it values clamp
        phi, _ = pot.phi_and_dphi(pot.cutoff)
        rho, _ = pot.density(pot.cutoff)
        assert abs(phi) < 1e-12
        assert 0 <= rho < 1e-6
        assert pot.density(pot.rho.x_end)[0] == rho


class TestFile:
    def test_synthetic_has_5000_knots(self, pot):
        assert pot.nrho == pot.nr == 5000
        assert pot.cutoff == pytest.approx(pot.nr * pot.dr, abs=1e-9)
        assert pot.mass == synthetic.MASS and pot.atomic_number == 26

    def test_roundtrip(self, tmp_path, rng):
        F, rphi, rho = rng.normal(size=40), rng.normal(size=30), rng.normal(size=30)
        p = tmp_path / "r.eam"
        write_tables(p, F, rphi, rho, per_line=3)
        pot = parse_potential_file(p)
        assert np.array_equal(pot.F.knots, F)
        assert np.array_equal(pot.rphi.knots, rphi)
        assert np.array_equal(pot.rho.knots, rho)

    def test_shortfall_reports_last_line(self, tmp_path, rng):
        p = tmp_path / "short.eam"
        write_tables(p, rng.normal(size=10), rng.normal(size=10), rng.normal(size=10))
        lines = p.read_text().splitlines()
        lines[-1] = " ".join(lines[-1].split()[:-1])
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError, match="expected 30") as err:
            parse_potential_file(p)
        assert err.value.line == len(lines)

    def test_extra_value(self, tmp_path, rng):
        p = tmp_path / "extra.eam"
        write_tables(p, rng.normal(size=10), rng.normal(size=10), rng.normal(size=10))
        p.write_text(p.read_text() + "1.0\n")
        with pytest.raises(ParseError, match="extra"):
            parse_potential_file(p)

    def test_bad_token(self, tmp_path, rng):
        p = tmp_path / "bad.eam"
        write_tables(p, rng.normal(size=10), rng.normal(size=10), rng.normal(size=10))
        lines = p.read_text().splitlines()
        lines[5] = "abc " + lines[5]
        p.write_text("\n".join(lines))
        with pytest.raises(ParseError) as err:
            parse_potential_file(p)
        assert err.value.line == 6

    @pytest.mark.parametrize(
        "header, line",
        [("26 55.845 2.8553 bcc\n10 0.01 10 0.001\n", 3),
         ("26 55.845 2.8553 bcc\n10 -0.01 10 0.001 0.01\n", 3),
         ("26 mass 2.8553 bcc\n10 0.01 10 0.001 0.01\n", 2),
         ("26 55.845 2.8553 bcc\n10 0.01 10 0.001 0.5\n", 3)],
    )
    def test_bad_headers(self, tmp_path, header, line):
        p = tmp_path / "h.eam"
        p.write_text("comment\n" + header + " ".join(["0.0"] * 30) + "\n")
        with pytest.raises(ParseError) as err:
            parse_potential_file(p)
        assert err.value.line == line


class TestSyntheticTables:
    def test_matches_closed_forms(self, pot):
        r = np.linspace(0.5, pot.cutoff - 1e-9, 20_001)
        assert np.max(np.abs(pot.density(r)[0] - synthetic.density(r))) <= 1e-6
        assert np.max(np.abs(pot.rphi(r)[0] - synthetic.r_phi(r))) <= 1e-6
        rho = np.linspace(0.1, synthetic.RHO_MAX, 20_001)
        assert np.max(np.abs(pot.embedding(rho)[0] - synthetic.embedding(rho))) <= 1e-6

    def test_lattice_minimum(self, pot):
        from latticemd.lattice import BoxSpec, site_positions

        def e_coh(a):
            box = BoxSpec(3, 3, 3, a)
            pos = site_positions(np.arange(box.n_sites), box)
            d = np.linalg.norm(pos - pos[0] - 1.5 * a, axis=1)  # distances from a central corner
            center = np.argmin(d)
            dist = np.linalg.norm(pos - pos[center], axis=1)
            return pot.energy_per_atom(dist[dist > 0])

        e0 = e_coh(synthetic.A0)
        assert e0 == pytest.approx(-4.28, abs=1e-3)
        assert e_coh(synthetic.A0 * 0.99) > e0 and e_coh(synthetic.A0 * 1.01) > e0

    def test_short_range_repulsive(self):
        r = np.linspace(0.3, 2.2, 400)
        assert np.all(np.diff(synthetic.pair(r)) < 0)
