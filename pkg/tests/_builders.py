"""Small randomized networks shared by the solver tests."""

import numpy as np

from matnet.aquifer import AquiferParams
from matnet.pvt import PvtTable
from matnet.relperm import RelPermCurves
from matnet.reservoir import Block, ReservoirNetwork
from matnet.synthetic import black_oil_table, corey_curves


def dead_oil_table(boi=1.25, c_o=1.5e-5, p_ref=4000.0, p_lo=500.0, p_hi=6000.0):
    """Undersaturated oil with linear Bo, no dissolved gas and no Rv."""
    p = np.array([p_lo, p_hi])
    ones = np.ones(2)
    return PvtTable(
        p, bo=boi * (1.0 + c_o * (p_ref - p)), bg=5e-4 * ones, bw=1.02 * ones,
        rs=0 * ones, rv=0 * ones, muo=1.1 * ones, mug=0.02 * ones, muw=0.5 * ones,
        rhoo=48.0 * ones, rhog=8.0 * ones, rhow=63.0 * ones,
    )


def random_network(rng, n_blocks=3, pvt=None, relperm=None):
    """Blocks with random volumes, depths and aquifers, fully connected
    with random transmissibilities."""
    pvt = pvt or black_oil_table()
    relperm = relperm or corey_curves()
    blocks = []
    for b in range(n_blocks):
        p_init = rng.uniform(3200.0, 4500.0)
        aq = None
        if rng.random() < 0.5:
            aq = AquiferParams(rng.uniform(2e6, 2e7), rng.uniform(0.5, 5.0), p_init)
        blocks.append(Block(
            b + 1, rng.uniform(5e6, 3e7), rng.uniform(0.0, 2e9), rng.uniform(0.15, 0.3),
            rng.uniform(2e-6, 6e-6), rng.uniform(2e-6, 4e-6), p_init, rng.uniform(6000.0, 8000.0),
            pvt, relperm, aq,
        ))
    triples = [(i, j, rng.uniform(10.0, 200.0)) for i in range(n_blocks) for j in range(i + 1, n_blocks)]
    return ReservoirNetwork(blocks, triples)


def random_cumulatives(rng, network, scale=1.0):
    """Plausible cumulative production/injection for one step."""
    from matnet.history import Cumulatives

    n = len(network)
    ooip = np.array([b.ooip for b in network.blocks])
    n_p = scale * rng.uniform(0.002, 0.02, n) * ooip
    return Cumulatives(
        n_p, n_p * rng.uniform(400.0, 900.0, n), n_p * rng.uniform(0.0, 0.3, n),
        np.where(rng.random(n) < 0.3, n_p * 200.0, 0.0), np.where(rng.random(n) < 0.3, n_p * 0.5, 0.0),
    )


def relperm_linear():
    s = np.linspace(0.0, 1.0, 6)
    return RelPermCurves(s, s**2, s**2, s**2)


def fd_ratio(analytic, residual, x, steps):
    """Worst ``|fd - J| / max(1e-6 |J|, 1e-9)`` over all entries, using
    central differences with a per-column step."""
    worst = 0.0
    for c in range(x.size):
        e = np.zeros_like(x)
        e[c] = steps[c]
        fd = (residual(x + e) - residual(x - e)) / (2 * steps[c])
        tol = np.maximum(1e-6 * np.abs(analytic[:, c]), 1e-9)
        worst = max(worst, float(np.max(np.abs(fd - analytic[:, c]) / tol)))
    return worst


def away_from_nodes(p, nodes, margin=0.05):
    """Nudge pressures off table nodes so central differences see one segment."""
    p = np.array(p, dtype=float)
    for k in range(p.size):
        while np.min(np.abs(nodes - p[k])) < margin:
            p[k] += 0.37
    return p


def history_jacobian_case(rng):
    """Random 3-block network advanced one step, with a trial pressure
    vector for the second step.  Returns ``(problem, state, cum, t, p)``."""
    from matnet.history import HistoryProblem

    network = random_network(rng, 3)
    prob = HistoryProblem(network)
    state = prob.initial_state()
    state, *_ = prob.solve_step(state, random_cumulatives(rng, network, 0.5), 30.0)
    cum = random_cumulatives(rng, network, 1.0)
    nodes = network.blocks[0].pvt.pressure_nodes
    while True:
        p = away_from_nodes(state.pressures - rng.uniform(-50.0, 150.0, 3), nodes)
        props = prob.tanks.pvt(p)
        # keep every phase potential clear of an upstream switch
        rho = np.vstack([props.rhoo, props.rhog, props.rhow])
        c = prob.conns
        gdz = (prob.tanks.z[c.j] - prob.tanks.z[c.i]) / 144.0
        phi = p[c.j] - p[c.i] - 0.5 * (rho[:, c.i] + rho[:, c.j]) * gdz
        if np.min(np.abs(phi)) > 1.0:
            return prob, state, cum, 60.0, p


def forecast_jacobian_case(n_steps_before=20, seed=0):
    """Default synthetic case advanced ``n_steps_before`` steps, with a
    perturbed iterate for the next forecast step."""
    from matnet.forecast import ForecastProblem, ForecastRow, pack, unpack
    from matnet.synthetic import make_synthetic

    case = make_synthetic()
    prob = ForecastProblem(case.network)
    state = prob.initial_state()
    sched = case.forecast
    for k in range(n_steps_before):
        state, _ = prob.solve_step(state, ForecastRow.from_schedule(sched, k), float(sched.times[k]))
    k = n_steps_before
    row = ForecastRow.from_schedule(sched, k)
    t = float(sched.times[k])
    rng = np.random.default_rng(seed)
    p, n_p, g_p, w_p = unpack(prob.initial_guess(state))
    n = len(case.network)
    nodes = case.network.blocks[0].pvt.pressure_nodes
    p = away_from_nodes(p - rng.uniform(10.0, 40.0, n), nodes)
    x = pack(p, n_p + rng.uniform(1e3, 3e4, n), g_p + rng.uniform(5e5, 2e7, n), w_p + rng.uniform(0, 500, n))
    scale = np.abs(x)
    steps = np.where(np.arange(x.size) % 4 == 0, 1e-3, 1e-6 * np.maximum(scale, 1.0))
    return prob, state, row, t, x, steps


_PATHS = {}


def warping_paths(n, m):
    """All monotone warping paths on an n x m grid as ``(cells, moves)``
    arrays padded with -1; moves are 0 horizontal (i-1, j), 1 vertical
    (i, j-1), 2 diagonal.  The first cell counts as a diagonal move."""
    if (n, m) in _PATHS:
        return _PATHS[(n, m)]
    found = []

    def walk(i, j, cells, moves):
        if (i, j) == (n - 1, m - 1):
            found.append((list(cells), list(moves)))
            return
        for di, dj, mv in ((1, 0, 0), (0, 1, 1), (1, 1, 2)):
            a, b = i + di, j + dj
            if a < n and b < m:
                cells.append(a * m + b)
                moves.append(mv)
                walk(a, b, cells, moves)
                cells.pop()
                moves.pop()

    walk(0, 0, [0], [2])
    length = n + m - 1
    cells = np.full((len(found), length), -1)
    moves = np.full((len(found), length), -1)
    for r, (c, mv) in enumerate(found):
        cells[r, :len(c)] = c
        moves[r, :len(mv)] = mv
    _PATHS[(n, m)] = (cells, moves)
    return cells, moves


def path_costs(cost, weights, cells, moves):
    w = np.append(np.asarray(weights, dtype=float), 0.0)  # index -1 -> padding
    flat = np.append(cost.ravel(), 0.0)
    return np.sum(flat[cells] * w[moves], axis=1)


def brute_force_dtw(x, y, weights, metric):
    from matnet.clustering.dtw import local_cost

    cost = local_cost(x, y, metric)
    cells, moves = warping_paths(*cost.shape)
    return float(path_costs(cost, weights, cells, moves).min())


def path_cost(x, y, path, weights, metric):
    """Cost of an explicit zero-based path under the move weights."""
    from matnet.clustering.dtw import local_cost

    cost = local_cost(x, y, metric)
    w_h, w_v, w_d = weights
    total = w_d * cost[path[0]]
    for (a, b), (c, d) in zip(path[:-1], path[1:]):
        w = w_d if (c - a, d - b) == (1, 1) else (w_h if (c - a, d - b) == (1, 0) else w_v)
        total += w * cost[c, d]
    return total


def two_blob_mixed(rng, n, separation=6.0):
    """Two well-separated numeric blobs with blob-correlated categories
    (one flipped at random) as an object array; returns ``(X, truth)``."""
    truth = np.zeros(n, dtype=int)
    truth[rng.permutation(n)[: max(1, n // 2)]] = 1
    if truth.sum() == n:
        truth[0] = 0
    num = rng.normal(size=(n, 2)) + separation * truth[:, None]
    cat = np.column_stack([truth, rng.integers(0, 3, n)])
    return np.column_stack([num, cat]).astype(object), truth


def best_two_partition_cost(X, categorical, gamma):
    from itertools import product

    from matnet.clustering import mixed_cost

    n = len(X)
    best = np.inf
    for tail in product((0, 1), repeat=n - 1):
        labels = (0,) + tail
        if 1 in tail:
            best = min(best, mixed_cost(X, labels, categorical, gamma))
    return best


def three_blob_pipeline(seed=0):
    """Bundled three-blob wells through encoding, elbow, k-prototypes and
    zoning.  Returns ``(elbow, labels, zones, wells)``."""
    from matnet import io
    from matnet.clustering import KPrototypes, SVMZoneMapper, WellFeatureEncoder, elbow_select

    wells = io.read_table(io.resolve("builtin:three_blobs_wells.csv"), ["well", "x", "y"],
                          optional=("type", "formation", "fault_region", "perf_count", "api"),
                          numeric=["x", "y", "perf_count"])
    enc = WellFeatureEncoder(["x", "y", "perf_count"], ["type", "formation", "fault_region"]).fit(wells)
    X = enc.transform(wells)
    cat = enc.categorical_indices_

    def fit(data, k):
        return KPrototypes(k, categorical=cat, random_state=seed).fit(data).cost_

    elbow = elbow_select(X, range(1, 9), fit)
    labels = KPrototypes(elbow.k, categorical=cat, random_state=seed).fit(X).labels_
    zones = SVMZoneMapper().fit(wells[["x", "y"]].to_numpy(float), labels)
    return elbow, labels, zones, wells


def xor_fixture(n_per=10, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    X = np.vstack([c + 0.08 * rng.normal(size=(n_per, 2)) for c in centers])
    y = np.repeat([0, 0, 1, 1], n_per)
    return X, y


def linear_gaussian_problem(seed=0, n_m=3, n_d=6):
    """Linear forward model ``d = G m + e`` with a Gaussian prior and the
    direct regularized least-squares solution."""
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n_d, n_m))
    mu = rng.normal(size=n_m)
    a = rng.normal(size=(n_m, n_m))
    c_m = a @ a.T + n_m * np.eye(n_m)
    c_d = rng.uniform(0.5, 2.0, n_d)
    m_true = rng.multivariate_normal(mu, c_m)
    d = G @ m_true + rng.normal(size=n_d) * np.sqrt(c_d)
    h = np.linalg.inv(c_m) + G.T @ np.diag(1 / c_d) @ G
    exact = np.linalg.solve(h, np.linalg.solve(c_m, mu) + G.T @ (d / c_d))
    return dict(G=G, mu=mu, c_m=c_m, c_d=c_d, d=d, exact=exact)


def linear_gaussian_update(problem, seed, n_e=500):
    """Posterior ensemble mean after one ES-rLM step with alpha = 1."""
    from matnet.history_match import es_rlm_update

    rng = np.random.default_rng(seed)
    G, c_d, d = problem["G"], problem["c_d"], problem["d"]
    m = rng.multivariate_normal(problem["mu"], problem["c_m"], size=n_e)
    d_pert = d + rng.normal(size=(n_e, d.size)) * np.sqrt(c_d)
    return es_rlm_update(m, m @ G.T, d_pert, c_d, 1.0).mean(axis=0)


def linear_gaussian_z(problem_seed=0, n_seeds=20, n_e=500):
    """Deviation of the seed-averaged posterior mean from the direct solve,
    in standard errors of that average."""
    prob = linear_gaussian_problem(problem_seed)
    means = np.array([linear_gaussian_update(prob, 1000 + s, n_e) for s in range(n_seeds)])
    se = means.std(axis=0, ddof=1) / np.sqrt(n_seeds)
    return (means.mean(axis=0) - prob["exact"]) / se
