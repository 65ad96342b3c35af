import numpy as np
import pytest

from p2plab.particles import ParticleSet, generate, jitter, read_csv, write_csv


@pytest.mark.parametrize("kind", ["uniform", "plummer"])
@pytest.mark.parametrize("dim", [2, 3])
def test_generators_in_unit_box_and_seeded(kind, dim):
    a = generate(kind, 500, dim, 3)
    b = generate(kind, 500, dim, 3)
    assert a.positions.shape == (500, dim)
    assert np.all((a.positions >= 0) & (a.positions < 1))
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.mass, b.mass)
    assert not np.array_equal(a.positions, generate(kind, 500, dim, 4).positions)


def test_unknown_generator():
    with pytest.raises(ValueError, match="unknown particle generator"):
        generate("disc", 10)


def test_plummer_is_clustered():
    p = generate("plummer", 4000, 3, 0)
    r = np.linalg.norm(p.positions - 0.5, axis=1)
    assert np.median(r) < 0.15


def test_take_keeps_ids():
    p = generate("uniform", 20, 2, 1)
    order = np.arange(20)[::-1]
    q = p.take(order)
    assert np.array_equal(q.ids, order)
    assert np.array_equal(q.positions, p.positions[order])


def test_jitter_stays_inside_and_keeps_mass():
    p = generate("uniform", 300, 3, 2)
    q = jitter(p, 0.05, 9)
    assert np.all((q.positions >= 0) & (q.positions < 1))
    assert np.array_equal(q.mass, p.mass)
    assert not np.array_equal(q.positions, p.positions)


@pytest.mark.parametrize("dim", [2, 3])
def test_csv_round_trip(tmp_path, dim):
    p = generate("uniform", 40, dim, 5)
    f = tmp_path / "p.csv"
    write_csv(p, f)
    head = f.read_text().splitlines()[0]
    assert head == ("id,x,y,mass" if dim == 2 else "id,x,y,z,mass")
    q = read_csv(f)
    assert np.array_equal(q.positions, p.positions)
    assert np.array_equal(q.mass, p.mass)


def test_csv_rejects_gaps(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("id,x,y,mass\n0,0.1,0.1,1\n2,0.2,0.2,1\n")
    with pytest.raises(ValueError, match="contiguous"):
        read_csv(f)


def test_particle_set_validation():
    with pytest.raises(ValueError):
        ParticleSet.from_arrays(np.zeros((3, 4)))


def test_generated_mass_sums_to_one():
    for kind in ("uniform", "plummer"):
        p = generate(kind, 500, 3, 2)
        assert p.mass.sum() == pytest.approx(1.0, abs=1e-12)
        assert p.mass.max() <= 3 * p.mass.min()
