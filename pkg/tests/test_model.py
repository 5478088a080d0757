import numpy as np
import pytest
from pydantic import ValidationError

from app.exceptions import InvalidCouplingError, UnsupportedModelError
from app.models import Boundary, ChainSpec, CouplingSpec, Geometry, RunConfig
from app.services.model import build_quadratic_form, link_sites, resolve_sites, site_fields, validate_form
from tests.conftest import ising, single_link, xxz


class TestLinkSites:
    def test_star_equal_spacing(self):
        assert link_sites(18, 6, Geometry.STAR_A) == (1, 4, 7, 10, 13, 16)

    def test_star_fills_chain(self):
        assert link_sites(5, 5, Geometry.STAR_A) == (1, 2, 3, 4, 5)

    def test_star_single_link_is_first_site(self):
        assert link_sites(300, 1, Geometry.STAR_A) == (1,)

    def test_contiguous_open_starts_at_edge(self):
        assert link_sites(18, 6, Geometry.CONTIGUOUS_B, Boundary.OPEN) == (1, 2, 3, 4, 5, 6)

    def test_contiguous_periodic_centered(self):
        assert link_sites(10, 3, Geometry.CONTIGUOUS_B, Boundary.PERIODIC) == (4, 5, 6)

    @pytest.mark.parametrize("N,m,geometry", [(20, 7, Geometry.STAR_A), (31, 9, Geometry.STAR_A),
                                              (12, 12, Geometry.CONTIGUOUS_B)])
    def test_distinct_sorted_in_range(self, N, m, geometry):
        sites = link_sites(N, m, geometry, Boundary.PERIODIC)
        assert len(sites) == m
        assert list(sites) == sorted(set(sites))
        assert sites[0] >= 1 and sites[-1] <= N

    @pytest.mark.parametrize("m", [0, 9])
    def test_m_out_of_range(self, m):
        with pytest.raises(InvalidCouplingError):
            link_sites(8, m, Geometry.STAR_A)

    def test_explicit_needs_sites(self):
        with pytest.raises(InvalidCouplingError):
            link_sites(8, 1, Geometry.EXPLICIT)

    def test_resolve_explicit_out_of_range(self):
        coupling = CouplingSpec(epsilon=0.1, m=1, geometry=Geometry.EXPLICIT, sites=(9,))
        with pytest.raises(InvalidCouplingError):
            resolve_sites(ising(8, 0.5), coupling)

    def test_site_fields(self):
        eps = site_fields(ising(6, 0.5), CouplingSpec(epsilon=0.3, m=2, geometry=Geometry.STAR_A))
        assert np.array_equal(eps, [0.3, 0, 0, 0.3, 0, 0])


class TestQuadraticForm:
    def test_two_site_ising(self):
        form = build_quadratic_form(ising(2, 0.0))
        assert np.array_equal(form.A, [[0.0, -1.0], [-1.0, 0.0]])
        assert np.array_equal(form.B, [[0.0, -1.0], [1.0, 0.0]])

    def test_three_site_diagonal_with_link(self):
        form = build_quadratic_form(ising(3, 0.5), single_link(0.25))
        assert np.allclose(np.diag(form.A), [-1.5, -1.0, -1.0])

    def test_zero_coupling_leaves_form_unchanged(self):
        chain = ising(7, 0.8, boundary=Boundary.PERIODIC, gamma=0.4)
        g = build_quadratic_form(chain)
        e = build_quadratic_form(chain, single_link(0.0))
        assert np.array_equal(g.A, e.A) and np.array_equal(g.B, e.B)

    @pytest.mark.parametrize("boundary", [Boundary.OPEN, Boundary.PERIODIC])
    def test_exact_symmetries(self, boundary):
        form = build_quadratic_form(ising(9, 1.3, boundary=boundary, gamma=0.6), single_link(0.2, site=4))
        assert np.array_equal(form.A, form.A.T)
        assert np.array_equal(form.B, -form.B.T)
        assert validate_form(form) == []

    def test_periodic_corner_conventions(self):
        chain = ising(6, 0.5, boundary=Boundary.PERIODIC)
        cyclic = build_quadratic_form(chain)
        exact = build_quadratic_form(chain, parity_exact=True)
        assert cyclic.A[0, 5] == -1.0 and exact.A[0, 5] == 1.0
        assert cyclic.B[5, 0] == -1.0 and exact.B[5, 0] == 1.0
        assert np.array_equal(cyclic.A[:5, :5], exact.A[:5, :5])

    def test_interacting_chain_rejected(self):
        with pytest.raises(UnsupportedModelError, match="method=ed"):
            build_quadratic_form(xxz(6, 0.5))

    @pytest.mark.parametrize("chain", [ising(6, 0.5), ising(7, 0.5, boundary=Boundary.PERIODIC),
                                       ising(14, 0.5, boundary=Boundary.PERIODIC)])
    def test_parity_exact_guards(self, chain):
        with pytest.raises(UnsupportedModelError):
            build_quadratic_form(chain, parity_exact=True)

    def test_link_beyond_chain(self):
        with pytest.raises(InvalidCouplingError):
            build_quadratic_form(ising(3, 0.5), CouplingSpec(epsilon=0.1, m=4))


class TestSpecs:
    def test_lambda_alias(self):
        chain = ChainSpec.model_validate({"N": 4, "lambda": 0.7})
        assert chain.lambda_ == 0.7
        assert chain.model_dump(by_alias=True)["lambda"] == 0.7

    @pytest.mark.parametrize("data", [{"N": 1}, {"N": 4, "J": 0.0}, {"N": 4, "gamma": 1.5},
                                      {"N": 4, "lambda": float("nan")}, {"N": 4, "foo": 1}])
    def test_invalid_chain(self, data):
        with pytest.raises(ValidationError):
            ChainSpec.model_validate(data)

    def test_explicit_geometry_requires_sites(self):
        with pytest.raises(ValidationError):
            CouplingSpec(epsilon=0.1, m=2, geometry=Geometry.EXPLICIT)
        with pytest.raises(ValidationError):
            CouplingSpec(epsilon=0.1, m=2, geometry=Geometry.EXPLICIT, sites=(3, 2))

    def test_with_updates_revalidates(self):
        chain = ising(8, 0.5)
        assert chain.with_updates(lambda_=1.5).lambda_ == 1.5
        with pytest.raises(ValidationError):
            chain.with_updates(N=0)

    def test_run_config_rejects_too_many_links(self):
        with pytest.raises(ValidationError):
            RunConfig.model_validate({"model": {"N": 4}, "coupling": {"m": 5}})

    def test_run_config_schema_version(self):
        with pytest.raises(ValidationError):
            RunConfig.model_validate({"schema_version": "2", "model": {"N": 4}})
