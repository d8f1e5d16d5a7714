"""Cross-module invariants exercised on scaled-down coupled runs."""

import numpy as np
import pytest
from dataclasses import replace

from droplet1d import coupling, fpm, scenarios


@pytest.fixture(scope="module")
def small_droplet_cfg():
    return replace(scenarios.preset("test1c"), molecules_per_cell=300,
                   n_cells=100, seed=11)


@pytest.mark.slow
def test_stencils_reproduce_polynomials_throughout_a_run(small_droplet_cfg):
    # every least-squares stencil met during a full droplet run must fit
    # {1, x, x^2} to 1e-8; the audit raises on the first violation
    fpm.AUDIT_POLYNOMIAL_EXACTNESS = True
    try:
        res = coupling.run_continuum(small_droplet_cfg)
    finally:
        fpm.AUDIT_POLYNOMIAL_EXACTNESS = False
    assert res.metadata["steps"] > 0


@pytest.mark.slow
def test_liquid_particle_count_conserved(small_droplet_cfg):
    res = coupling.run_continuum(small_droplet_cfg)
    assert (res.metadata["liquid_particles_final"]
            == res.metadata["liquid_particles_initial"])
    res_k = coupling.run_kinetic(small_droplet_cfg)
    assert (res_k.metadata["liquid_particles_final"]
            == res_k.metadata["liquid_particles_initial"])


@pytest.mark.slow
def test_droplet_width_constant_over_runs(small_droplet_cfg):
    for runner in (coupling.run_continuum, coupling.run_kinetic):
        res = runner(small_droplet_cfg)
        widths = np.asarray(res.trace.x_right) - np.asarray(res.trace.x_left)
        assert np.max(np.abs(widths / widths[0] - 1.0)) < 1e-3


@pytest.mark.slow
def test_gas_mass_conserved_without_transport():
    # inviscid, non-conducting gas: the discrete Lagrangian mass budget
    # (density times half-gap volume shares) must close to 0.5 %
    cfg = replace(scenarios.preset("test1a"), transport_override=(0.0, 0.0),
                  algorithm="I")
    res = coupling.run_continuum(cfg)
    m0 = res.metadata["gas_mass_initial"]
    m1 = res.metadata["gas_mass_final"]
    assert abs(m1 - m0) / m0 < 0.005


@pytest.mark.slow
def test_pressure_slope_opposes_liquid_acceleration(small_droplet_cfg):
    res = coupling.run_continuum(small_droplet_cfg)
    tr = res.trace
    slopes = np.asarray(tr.p_right) - np.asarray(tr.p_left)
    u = np.asarray(tr.u_liquid)
    dudt = np.diff(np.concatenate(([100.0], u)))
    assert np.all(slopes * dudt <= 1e-12 * np.max(np.abs(slopes)))
