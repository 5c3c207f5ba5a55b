import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticemd import synthetic
from latticemd.errors import OverlapError
from latticemd.forces import (
    BLUE,
    RED,
    ForceEngine,
    block_write_sets,
    build_color_partition,
    compute_density,
    compute_embedding_derivative,
    compute_forces,
)
from latticemd.lattice import BoxSpec, site_positions
from latticemd.neighbors import build_offsets
from latticemd.potential import EamPotential, build_spline
from latticemd.store import ATOM_DTYPE, LatticeStore, perfect_lattice_records

A0 = synthetic.A0
SKIN = 0.3 * A0


def table_pot(f_fn, rho_fn, z_fn, cutoff=synthetic.CUTOFF, n=3000, rho_max=40.0):
    drho = rho_max / (n - 1)
    dr = cutoff / n
    return EamPotential(
        atomic_number=26, mass=55.845, a0=A0, lattice="bcc",
        F=build_spline(f_fn(np.arange(n) * drho), drho),
        rho=build_spline(rho_fn(np.arange(n) * dr), dr),
        rphi=build_spline(z_fn(np.arange(n) * dr), dr),
        cutoff=cutoff,
    )


def setup(box_cells, cutoff, records):
    g = int(np.ceil((cutoff + SKIN) / A0))
    box = BoxSpec(*box_cells, A0, g)
    store = LatticeStore(box)
    store.insert_many(records(box) if callable(records) else records)
    store.update_hash()
    store.fill_ghosts()
    return store, build_offsets(box, cutoff, SKIN)


def atoms(positions):
    rec = np.zeros(len(positions), dtype=ATOM_DTYPE)
    rec["tag"] = np.arange(len(positions))
    rec["pos"] = positions
    return rec


def by_tag(store, field):
    rec = store.local_records()
    order = np.argsort(rec["tag"])
    return rec[field][order]


def random_cluster(rng, n=20, lo=6.0, hi=13.0, rmin=2.0):
    pts = []
    while len(pts) < n:
        p = rng.uniform(lo, hi, 3)
        if all(np.linalg.norm(p - q) > rmin for q in pts):
            pts.append(p)
    return np.array(pts)


def total_energy(store, idx, pot):
    return compute_forces(store, idx, pot).potential_energy


class TestPartition:
    def test_single_worker(self):
        part = build_color_partition(BoxSpec(8, 8, 8, A0), 1, 4.4)
        assert part.blocks == ((0, 4), (4, 8))
        assert part.colors == (RED, BLUE)

    def test_deep_box_full_width(self):
        part = build_color_partition(BoxSpec(4, 4, 256, A0), 64, 3.5)
        assert len(part.blocks) == 128 and part.workers == 64

    def test_reduced_workers(self):
        part = build_color_partition(BoxSpec(12, 12, 12, A0), 8, synthetic.CUTOFF + SKIN)
        assert part.workers == 3 and len(part.blocks) == 6

    def test_thin_box_falls_back(self):
        part = build_color_partition(BoxSpec(4, 4, 3, A0), 4, 4.4)
        assert part.workers == 1
        assert part.blocks[0][0] == 0 and part.blocks[-1][1] == 3

    @settings(max_examples=200)
    @given(nz=st.integers(1, 80), w=st.integers(1, 70), cutoff=st.floats(0.5, 12.0))
    def test_properties(self, nz, w, cutoff):
        part = build_color_partition(BoxSpec(2, 2, nz, A0), w, cutoff)
        b = part.blocks
        assert b[0][0] == 0 and b[-1][1] == nz
        assert all(b[k][1] == b[k + 1][0] for k in range(len(b) - 1))
        assert all(part.colors[k] != part.colors[k + 1] for k in range(len(b) - 1))
        thick = [z1 - z0 for z0, z1 in b]
        assert max(thick) - min(thick) <= 1
        assert part.workers <= w
        if part.workers > 1:
            assert len(b) == 2 * part.workers
            assert min(thick) >= part.min_thickness

    def test_same_color_write_sets_disjoint(self, rng):
        store, idx = setup((6, 6, 12), synthetic.CUTOFF, lambda box: perfect_lattice_records(box))
        part = build_color_partition(store.box, 3, idx.radius)
        sets = block_write_sets(store, idx, part)
        for color in (RED, BLUE):
            ks = [k for k, c in enumerate(part.colors) if c == color]
            for i in ks:
                for j in ks:
                    if i < j:
                        assert sets[i].isdisjoint(sets[j])

    def test_same_color_blocks_out_of_range(self):
        box = BoxSpec(3, 3, 12, A0)
        part = build_color_partition(box, 3, synthetic.CUTOFF + SKIN)
        pos = site_positions(np.arange(box.n_sites), box)
        z = pos[:, 2]
        for color in (RED, BLUE):
            blocks = part.phase(color)
            for i, (a0_, a1) in enumerate(blocks):
                for b0, b1 in blocks[i + 1:]:
                    za = z[(z >= a0_ * A0 - 1e-9) & (z < a1 * A0 - 1e-9)]
                    zb = z[(z >= b0 * A0 - 1e-9) & (z < b1 * A0 - 1e-9)]
                    assert (zb.min() - za.max()) > part.min_thickness * A0 - 0.5 * A0 - 1e-9


class TestDensity:
    def test_isolated_atom(self, pot):
        store, idx = setup((4, 4, 4), pot.cutoff, atoms([[5.0, 5.0, 5.0]]))
        compute_density(store, idx, pot)
        assert by_tag(store, "rho")[0] == 0.0

    def test_dimer(self, pot):
        r = 2.6
        store, idx = setup((4, 4, 4), pot.cutoff, atoms([[5.0, 5.0, 5.0], [5.0 + r, 5.0, 5.0]]))
        compute_density(store, idx, pot)
        want = pot.density(r)[0]
        assert np.allclose(by_tag(store, "rho"), want, rtol=0, atol=1e-15)

    def test_perfect_lattice_shell_sum(self, pot):
        store, idx = setup((5, 5, 5), pot.cutoff, perfect_lattice_records)
        compute_density(store, idx, pot)
        rho = by_tag(store, "rho")
        n = 3
        r = np.arange(-n, n + 1)
        g = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3).astype(float)
        d = np.linalg.norm(np.concatenate([g, g + 0.5]) * A0, axis=1)
        d = d[(d > 0) & (d <= pot.cutoff)]
        assert np.allclose(rho, pot.density(d)[0].sum(), rtol=1e-13)
        assert np.ptp(rho) < 1e-12


class TestEmbedding:
    def _run(self, pot):
        store, idx = setup((4, 4, 4), pot.cutoff, perfect_lattice_records)
        compute_density(store, idx, pot)
        compute_embedding_derivative(store, pot)
        return store

    def test_linear(self):
        pot = table_pot(lambda x: x, synthetic.density, synthetic.r_phi)
        assert np.allclose(by_tag(self._run(pot), "df"), 1.0)

    def test_quadratic(self):
        pot = table_pot(lambda x: x ** 2, synthetic.density, synthetic.r_phi)
        s = self._run(pot)
        assert np.allclose(by_tag(s, "df"), 2 * by_tag(s, "rho"), rtol=1e-8)

    def test_isolated_atom_uses_first_segment(self, pot):
        p = table_pot(lambda x: x ** 2 + 3 * x, synthetic.density, synthetic.r_phi)
        store, idx = setup((4, 4, 4), p.cutoff, atoms([[5.0, 5.0, 5.0]]))
        compute_density(store, idx, p)
        total, clamped = compute_embedding_derivative(store, p)
        assert by_tag(store, "df")[0] == pytest.approx(3.0, abs=1e-9)
        assert total == pytest.approx(0.0, abs=1e-14) and clamped == 0

    def test_clamp_counter(self):
        p = table_pot(lambda x: x, synthetic.density, synthetic.r_phi, rho_max=1.0)
        store, idx = setup((4, 4, 4), p.cutoff, perfect_lattice_records)
        compute_density(store, idx, p)
        _, clamped = compute_embedding_derivative(store, p)
        assert clamped == 128

    def test_ghost_images_inherit_df(self, pot):
        store, idx = setup((4, 4, 4), pot.cutoff, perfect_lattice_records)
        store.slots["pos"][store.local_ids[::7]] += 0.1
        store.update_hash()
        store.fill_ghosts()
        compute_density(store, idx, pot)
        compute_embedding_derivative(store, pot)
        g = store.ghost_ids[store.slots["valid"][store.ghost_ids] == 1]
        src = store.ghost_src[store.slots["valid"][store.ghost_ids] == 1]
        assert np.array_equal(store.slots["df"][g], store.slots["df"][src])


class TestPairForces:
    def test_pure_pair_dimer(self):
        pot = table_pot(lambda x: x, np.zeros_like, synthetic.r_phi)
        r = 2.5
        store, idx = setup((4, 4, 4), pot.cutoff, atoms([[5.0, 5.0, 5.0], [5.0 + r, 5.0, 5.0]]))
        compute_forces(store, idx, pot)
        f = by_tag(store, "force")
        _, dphi = pot.phi_and_dphi(r)
        assert f[0, 0] == pytest.approx(dphi, rel=1e-14)
        assert np.array_equal(f[0], -f[1])

    def test_antisymmetry_exact(self, pot):
        store, idx = setup((4, 4, 4), pot.cutoff, atoms([[5.0, 5.1, 4.9], [7.3, 6.2, 5.8]]))
        compute_forces(store, idx, pot)
        f = by_tag(store, "force")
        assert np.array_equal(f[0], -f[1])
        assert np.any(f[0] != 0)

    def test_perfect_lattice_zero_force(self, pot):
        store, idx = setup((6, 6, 6), pot.cutoff, perfect_lattice_records)
        res = compute_forces(store, idx, pot)
        assert np.abs(by_tag(store, "force")).max() <= 1e-9
        assert res.potential_energy / store.n_atoms() == pytest.approx(-4.28, abs=1e-3)

    def test_net_force_zero_periodic(self, pot, rng):
        def rec(box):
            r = perfect_lattice_records(box)
            r["pos"] += rng.normal(0, 0.15, r["pos"].shape)
            return r

        store, idx = setup((6, 6, 6), pot.cutoff, rec)
        compute_forces(store, idx, pot)
        assert np.abs(by_tag(store, "force").sum(axis=0)).max() <= 1e-8

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_gradient(self, pot, seed):
        rng = np.random.default_rng(seed)
        store, idx = setup((8, 8, 8), pot.cutoff, atoms(random_cluster(rng)))
        compute_forces(store, idx, pot)
        forces = by_tag(store, "force")
        h = 1e-5
        fd = np.zeros_like(forces)
        for tag in range(len(forces)):
            for ax in range(3):
                e = []
                for sgn in (1, -1):
                    s2 = copy.deepcopy(store)
                    for arr in (s2.slots, s2.clash.atoms):
                        m = (arr["tag"] == tag) & (arr["valid"] == 1) & (arr["ghost"] == 0)
                        arr["pos"][m, ax] += sgn * h
                    s2.update_hash()
                    s2.fill_ghosts()
                    e.append(total_energy(s2, idx, pot))
                fd[tag, ax] = -(e[0] - e[1]) / (2 * h)
        err = np.abs(fd - forces).max() / np.abs(forces).max()
        assert err <= 1e-5

    def test_clash_pairs_match_slot_pairs(self, pot):
        # two atoms close together around one site: one lives in the clash map
        base = [[5.0, 5.0, 5.0], [7.5, 5.0, 5.2], [5.4, 7.3, 5.1]]
        store, idx = setup((4, 4, 4), pot.cutoff, atoms(base + [[5.3, 5.0, 5.0]]))
        assert store.clash.local.sum() >= 1
        compute_forces(store, idx, pot)
        f_clash = by_tag(store, "force")
        # same geometry, shifted so no two atoms share a site
        shift = np.array([0.0, 0.0, 0.0])
        pts = np.array(base + [[5.3, 5.0, 5.0]])
        rng = np.random.default_rng(0)
        found = False
        for _ in range(200):
            shift = rng.uniform(0, A0, 3)
            s2, _ = setup((4, 4, 4), pot.cutoff, atoms(pts + shift))
            if len(s2.clash) == 0:
                found = True
                break
        assert found
        compute_forces(s2, idx, pot)
        assert np.allclose(by_tag(s2, "force"), f_clash, atol=1e-12)

    def test_overlap_raises_with_tags(self, pot):
        store, idx = setup((4, 4, 4), pot.cutoff, atoms([[5.0, 5.0, 5.0], [5.0, 5.0, 5.0]]))
        with pytest.raises(OverlapError) as err:
            compute_forces(store, idx, pot)
        assert set(err.value.tags) == {0, 1}


class TestColoring:
    def test_matches_serial(self, pot, rng):
        def rec(box):
            r = perfect_lattice_records(box)
            r["pos"] += rng.normal(0, 0.12, r["pos"].shape)
            return r

        store, idx = setup((6, 6, 12), pot.cutoff, rec)
        serial = compute_forces(store, idx, pot)
        f0 = by_tag(store, "force")
        for w in (2, 3):
            part = build_color_partition(store.box, w, idx.radius)
            with ForceEngine(pot, idx, part) as eng:
                res = eng.compute(store)
            assert np.abs(by_tag(store, "force") - f0).max() <= 1e-10
            assert res.potential_energy == pytest.approx(serial.potential_energy, rel=1e-12)
