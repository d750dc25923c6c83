"""Quick sanity pass over the python bindings; runs with plain asserts."""

import math

import numpy as np

import phylosde as p


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


# trees: parse, generate, round trip, shared paths
tree = p.parse_newick("((a:1,b:1):2,(c:2,d:2):1);")
assert tree.n_tips == 4
assert tree.tip_labels == ["a", "b", "c", "d"]
g, order = p.shared_path_matrix(tree)
assert order == ["a", "b", "c", "d"]
assert close(g[0, 1], 2.0) and close(g[2, 3], 1.0) and close(g[0, 2], 0.0)
assert close(g[0, 0], 3.0)
shared, post_i, post_j, diverged = p.pair_times(tree, 0, 1)
assert close(shared, 2.0) and close(post_i, 1.0) and close(post_j, 1.0)

rand = p.generate_tree("birth_death", 32, 15.0, seed=7)
assert rand.n_tips == 32
assert p.parse_newick(rand.newick()).newick() == rand.newick()

try:
    p.parse_newick("((a:1,b:1;")
    raise AssertionError("malformed newick must raise")
except p.TreeParseError:
    pass

# moments: closed form against the stepped integrator, plus the ratio curve
params = p.ModelParams("oubmbm", alpha_y=0.05, sigma_theta=0.32, tau=0.01)
for t in (0.5, 5.0, 50.0):
    a = p.solve_moments(params, t, 0.3, 0.1)
    b = p.solve_moments_numeric(params, t, 1e-3, 0.3, 0.1)
    assert close(a.var_y, b.var_y, 1e-6)
    assert close(a.cov_y_theta, b.cov_y_theta, 1e-6)

oubm = p.ModelParams("oubm", alpha_y=0.05, sigma_y=0.01, sigma_theta=0.32)
r = p.rho(oubm, 10.0)
expected = 1.0 - (1.0 - math.exp(-0.5)) / 0.5
assert close(r, expected, 1e-12)
try:
    p.rho(p.ModelParams("bm", sigma_y=0.2), 7.0)
    raise AssertionError("rho must reject a deterministic optimum")
except p.NumericalError:
    pass

# pair covariances: analytic two-species forms
bm = p.ModelParams("bm", sigma_y=0.2)
tt, _, _, _ = p.pair_cross_moments(bm, 3.0, 2.0, 4.0)
assert close(tt, 0.04 * 3.0, 1e-12)
ou = p.ModelParams("ou", alpha_y=0.7, sigma_y=0.2)
got = p.species_covariance(ou, 3.0, 2.0, 4.0)
want = 0.04 * math.exp(-0.7 * 6.0) * (1.0 - math.exp(-1.4 * 3.0)) / 1.4
assert close(got, want, 1e-10)

trait_cov, resid_cov, atten, order = p.residual_covariance(rand, oubm)
assert trait_cov.shape == (32, 32)
assert np.allclose(trait_cov, trait_cov.T)
assert np.all(atten > 0) and np.all(atten <= 1.0)
assert order == rand.tip_labels

# simulation: deterministic under a fixed seed. The strong pull keeps the
# slope identifiable from this single draw when it is refit below.
strong = p.ModelParams("oubm", alpha_y=0.5, sigma_y=0.1, sigma_theta=0.4)
species, x, y = p.simulate_tips(rand, strong, seed=9, b0=0.5, b1=0.8,
                                sigma_x=0.5)
species2, x2, y2 = p.simulate_tips(rand, strong, seed=9, b0=0.5, b1=0.8,
                                   sigma_x=0.5)
assert species == list(rand.tip_labels)
assert np.array_equal(y, y2) and np.array_equal(x, x2)
assert np.all(np.isfinite(y))

path = p.simulate_path(params, 10.0, dt=0.01, seed=3, b0=0.5, b1=0.32)
assert path.shape[1] == 5
assert close(path[-1, 0], 10.0, 1e-9)

# fitting and ranking on a simulated data set
fit = p.fit_model(rand, species, x, y, "oubm", seed=1)
assert fit.kind == "oubm"
assert fit.n == 32 and fit.k == 4
assert fit.converged
assert math.isfinite(fit.log_likelihood)
assert close(fit.params.sigma_theta,
             abs(fit.coefficients[1]) * math.sqrt(fit.sigma_x2), 1e-9)

report = p.compare_models(rand, species, x, y, ["bm", "ou", "oubm"], seed=1)
assert [e["kind"] for e in report] == ["bm", "ou", "oubm"]
assert all(e["ok"] for e in report)
total = sum(e["weight"] for e in report)
assert close(total, 1.0, 1e-9)
assert min(e["delta_aicc"] for e in report) == 0.0

assert close(p.aicc(-10.0, 3, 10), 27.5, 1e-12)
w = p.akaike_weights([7.0, 7.0])
assert close(w[0], 0.5, 1e-15) and close(w[1], 0.5, 1e-15)

print("smoke test ok")
