"""Compiled numeric kernels shared by the cost, geometry and solver layers.

Everything here works on raw arrays so the same code path serves the public
dataclass API and the hot loops of the solvers. Indices are 0-based change
positions: the segment ``(a, b)`` covers rows ``a .. b-1`` and its sufficient
statistics are ``P[b] - P[a]`` on the prefix arrays.
"""

import time

import numpy as np
from numba import njit, objmode

GAUSSIAN = 0
POISSON = 1
NEGBIN = 2

EPS = 1e-12

METHOD_OP = 0
METHOD_PELT = 1
METHOD_GEOM_S = 2
METHOD_GEOM_R = 3

FUTURE_ALL = 0
FUTURE_LAST = 1
FUTURE_LAST_RANDOM = 2

PAST_ALL = 0
PAST_EMPTY = 1
PAST_RANDOM = 2

_ROOT_MAX_ITER = 200
_TIME_CHECK_EVERY = 512


@njit(cache=True)
def domain_bounds(code):
    if code == GAUSSIAN:
        return -np.inf, np.inf
    if code == POISSON:
        return EPS, np.inf
    return EPS, 1.0 - EPS


@njit(cache=True)
def compensated_cumsum(x):
    """Column-wise prefix sums with a leading zero row (Neumaier summation)."""
    n, p = x.shape
    out = np.zeros((n + 1, p))
    for k in range(p):
        s = 0.0
        comp = 0.0
        for i in range(n):
            v = x[i, k]
            tmp = s + v
            if abs(s) >= abs(v):
                comp += (s - tmp) + v
            else:
                comp += (v - tmp) + s
            s = tmp
            out[i + 1, k] = s + comp
    return out


@njit(cache=True)
def dim_argmin(code, phi, m, s):
    if code == GAUSSIAN:
        return s / m
    if code == POISSON:
        if s > 0.0:
            return s / m
        return EPS
    c = s / (s + m * phi)
    if c < EPS:
        return EPS
    if c > 1.0 - EPS:
        return 1.0 - EPS
    return c


@njit(cache=True)
def dim_value(code, phi, m, s, q, theta):
    """One-dimensional segment cost ``s^k(theta)`` from sufficient statistics."""
    if code == GAUSSIAN:
        c = s / m
        rss = q - s * c
        if rss < 0.0:
            rss = 0.0
        d = theta - c
        return m * d * d + rss
    if code == POISSON:
        if theta == np.inf:
            return np.inf
        v = m * theta + q
        if s != 0.0:
            v -= s * np.log(theta)
        return 2.0 * v
    v = m * phi * np.log1p(-theta) + q
    if s != 0.0:
        v += s * np.log(theta)
    return -2.0 * v


@njit(cache=True)
def dim_slope(code, phi, m, s, theta):
    """Derivative of :func:`dim_value` in ``theta``."""
    if code == GAUSSIAN:
        return 2.0 * (m * theta - s)
    if code == POISSON:
        return 2.0 * (m - s / theta)
    return 2.0 * (m * phi / (1.0 - theta) - s / theta)


@njit(cache=True)
def dim_min(code, phi, m, s, q):
    return dim_value(code, phi, m, s, q, dim_argmin(code, phi, m, s))


@njit(cache=True, inline="always")
def _gauss_cost(P1, P2, a, b):
    inv_m = 1.0 / (b - a)
    total = 0.0
    for k in range(P1.shape[1]):
        s = P1[b, k] - P1[a, k]
        rss = (P2[b, k] - P2[a, k]) - s * (s * inv_m)
        if rss > 0.0:
            total += rss
    return total


@njit(cache=True)
def segment_cost(P1, P2, code, phi, a, b):
    if code == GAUSSIAN:
        return _gauss_cost(P1, P2, a, b)
    m = float(b - a)
    total = 0.0
    for k in range(P1.shape[1]):
        total += dim_min(code, phi, m, P1[b, k] - P1[a, k], P2[b, k] - P2[a, k])
    return total


@njit(cache=True)
def _clamp(x, lo, hi):
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


@njit(cache=True)
def _root_side(code, phi, m, s, q, K, x_in, bound, inner):
    # x_in satisfies s^k(x_in) <= K; walk towards `bound` until crossing K.
    tol = 1e-10 * (1.0 + abs(K))
    if np.isfinite(bound):
        g_out = dim_value(code, phi, m, s, q, bound) - K
        if g_out <= 0.0:
            return bound
        x_out = bound
    else:
        step = max(abs(x_in), 1.0)
        x_out = x_in + step
        g_out = dim_value(code, phi, m, s, q, x_out) - K
        while g_out <= 0.0:
            x_in = x_out
            step *= 2.0
            x_out = x_in + step
            g_out = dim_value(code, phi, m, s, q, x_out) - K
    g_in = dim_value(code, phi, m, s, q, x_in) - K
    # by convexity a Newton step from the outer end stays outside and a
    # secant step lands inside; bisection is the fallback
    for _ in range(_ROOT_MAX_ITER):
        if g_out <= tol and -g_in <= tol:
            break
        mid = 0.5 * (x_in + x_out)
        if mid == x_in or mid == x_out:
            break
        if g_out > tol:
            slope = dim_slope(code, phi, m, s, x_out)
            x = x_out - g_out / slope if slope != 0.0 else mid
        else:
            x = x_in - g_in * (x_out - x_in) / (g_out - g_in)
        if not (min(x_in, x_out) < x < max(x_in, x_out)):
            x = mid
        g = dim_value(code, phi, m, s, q, x) - K
        if g <= 0.0:
            x_in = x
            g_in = g
        else:
            x_out = x
            g_out = g
    if inner:
        return x_in
    return x_out


@njit(cache=True)
def dim_roots(code, phi, m, s, q, K, inner):
    """Solution interval of ``s^k(theta) <= K`` within the parameter domain.

    Returns ``(lo, hi, nonempty)``. Bisection endpoints are the outer bracket
    ends by default (a superset of the true interval); ``inner=True`` returns
    the inner ends (a subset), which is what exclusion needs to stay sound.
    """
    lo_dom, hi_dom = domain_bounds(code)
    if code == GAUSSIAN:
        c = s / m
        rss = q - s * c
        if rss < 0.0:
            rss = 0.0
        if not K >= rss:
            return np.nan, np.nan, False
        h = np.sqrt((K - rss) / m)
        return c - h, c + h, True
    c = dim_argmin(code, phi, m, s)
    if dim_value(code, phi, m, s, q, c) > K:
        return np.nan, np.nan, False
    r1 = _root_side(code, phi, m, s, q, K, c, lo_dom, inner)
    r2 = _root_side(code, phi, m, s, q, K, c, hi_dom, inner)
    return r1, r2, True


@njit(cache=True, inline="always")
def _rect_inter_gauss(P1, P2, code, phi, a, b, delta, lo, hi):
    p = lo.shape[0]
    m = float(b - a)
    inv_m = 1.0 / m
    rad = delta
    tot = 0.0
    for k in range(p):
        s = P1[b, k] - P1[a, k]
        c = s * inv_m
        rss = (P2[b, k] - P2[a, k]) - s * c
        if rss > 0.0:
            rad -= rss
        d = _clamp(c, lo[k], hi[k]) - c
        tot += m * d * d
    if tot > rad:
        return False
    for k in range(p):
        c = (P1[b, k] - P1[a, k]) * inv_m
        d = _clamp(c, lo[k], hi[k]) - c
        K = rad - (tot - m * d * d)
        dl = c - lo[k]
        dh = hi[k] - c
        if (dl > 0.0 and m * dl * dl > K) or (dh > 0.0 and m * dh * dh > K):
            h = np.sqrt(max(K, 0.0) * inv_m)
            lo[k] = max(lo[k], c - h)
            hi[k] = min(hi[k], c + h)
            if lo[k] > hi[k]:
                return False
    return True


@njit(cache=True)
def rect_inter(P1, P2, code, phi, a, b, delta, lo, hi):
    """Tighten the box ``[lo, hi]`` in place to bound its intersection with S.

    Returns False when the intersection is provably empty (the box is then
    left in an unspecified state).
    """
    if a == b:
        return True
    if code == GAUSSIAN:
        return _rect_inter_gauss(P1, P2, code, phi, a, b, delta, lo, hi)
    return _rect_inter_count(P1, P2, code, phi, a, b, delta, lo, hi)


@njit(cache=True, inline="always")
def _rect_inter_count(P1, P2, code, phi, a, b, delta, lo, hi):
    p = lo.shape[0]
    m = b - a
    tot = 0.0
    for k in range(p):
        s = P1[b, k] - P1[a, k]
        q = P2[b, k] - P2[a, k]
        x = _clamp(dim_argmin(code, phi, m, s), lo[k], hi[k])
        tot += dim_value(code, phi, m, s, q, x)
    if tot > delta:
        return False
    for k in range(p):
        s = P1[b, k] - P1[a, k]
        q = P2[b, k] - P2[a, k]
        x = _clamp(dim_argmin(code, phi, m, s), lo[k], hi[k])
        K = delta - (tot - dim_value(code, phi, m, s, q, x))
        r1, r2, ok = dim_roots(code, phi, m, s, q, K, False)
        if not ok:
            return False
        new_lo = max(lo[k], r1)
        new_hi = min(hi[k], r2)
        if new_lo > new_hi:
            return False
        lo[k] = new_lo
        hi[k] = new_hi
    return True


@njit(cache=True)
def _far_value(code, phi, m, s, q, lo, hi):
    # s^k at the farthest box end; ties go to the lower end
    vl = dim_value(code, phi, m, s, q, lo)
    vh = dim_value(code, phi, m, s, q, hi)
    if vl >= vh:
        return vl
    return vh


@njit(cache=True)
def _cut(lo, hi, r1, r2):
    # Box interval minus root interval, per the exclusion rule.
    # Returns (lo, hi, nonempty).
    if r1 >= lo and r2 <= hi:
        return lo, hi, True
    if r2 < lo or r1 > hi:
        return lo, hi, True
    if r1 <= lo and r2 >= hi:
        return lo, hi, False
    if r1 <= lo:
        return r2, hi, True
    return lo, r1, True


@njit(cache=True, inline="always")
def _rect_excl_gauss(P1, P2, code, phi, a, b, delta, lo, hi):
    p = lo.shape[0]
    m = float(b - a)
    inv_m = 1.0 / m
    n_inf = 0
    inf_k = -1
    tot = 0.0
    rad = delta
    for k in range(p):
        s = P1[b, k] - P1[a, k]
        c = s * inv_m
        rss = (P2[b, k] - P2[a, k]) - s * c
        if rss > 0.0:
            rad -= rss
        dl = lo[k] - c
        dh = hi[k] - c
        f = m * max(dl * dl, dh * dh)
        if f == np.inf:
            n_inf += 1
            inf_k = k
        else:
            tot += f
    if n_inf == 0:
        # farthest corner inside the ball: the whole box is covered
        if tot <= rad:
            return False
        for k in range(p):
            c = (P1[b, k] - P1[a, k]) * inv_m
            dl = lo[k] - c
            dh = hi[k] - c
            ml = m * dl * dl
            mh = m * dh * dh
            K = rad - tot + max(ml, mh)
            # only a box end lying inside the root interval gets trimmed
            if K < 0.0 or (ml > K and mh > K):
                continue
            h = np.sqrt(K * inv_m)
            if ml <= K:
                lo[k] = min(max(lo[k], c + h), hi[k])
            else:
                hi[k] = max(min(hi[k], c - h), lo[k])
        return True
    for k in range(p):
        if n_inf > 1 or inf_k != k:
            continue
        c = (P1[b, k] - P1[a, k]) * inv_m
        K = rad - tot
        if K < 0.0:
            continue
        h = np.sqrt(K * inv_m)
        new_lo, new_hi, ok = _cut(lo[k], hi[k], c - h, c + h)
        if not ok:
            return False
        lo[k] = new_lo
        hi[k] = new_hi
    return True


@njit(cache=True)
def rect_excl(P1, P2, code, phi, a, b, delta, lo, hi):
    """Shrink the box ``[lo, hi]`` in place to bound its part outside S.

    Returns False when the box lies inside S.
    """
    if a == b:
        return False
    if code == GAUSSIAN:
        return _rect_excl_gauss(P1, P2, code, phi, a, b, delta, lo, hi)
    return _rect_excl_count(P1, P2, code, phi, a, b, delta, lo, hi)


@njit(cache=True, inline="always")
def _rect_excl_count(P1, P2, code, phi, a, b, delta, lo, hi):
    p = lo.shape[0]
    m = b - a
    n_inf = 0
    inf_k = -1
    tot = 0.0
    for k in range(p):
        s = P1[b, k] - P1[a, k]
        q = P2[b, k] - P2[a, k]
        f = _far_value(code, phi, m, s, q, lo[k], hi[k])
        if f == np.inf:
            n_inf += 1
            inf_k = k
        else:
            tot += f
    for k in range(p):
        if n_inf > 1 or (n_inf == 1 and inf_k != k):
            continue
        s = P1[b, k] - P1[a, k]
        q = P2[b, k] - P2[a, k]
        f = _far_value(code, phi, m, s, q, lo[k], hi[k])
        other = tot if f == np.inf else tot - f
        r1, r2, ok = dim_roots(code, phi, m, s, q, delta - other, True)
        if not ok:
            continue
        new_lo, new_hi, ok = _cut(lo[k], hi[k], r1, r2)
        if not ok:
            return False
        lo[k] = new_lo
        hi[k] = new_hi
    return True


@njit(cache=True)
def ball_radius_sq(P1, P2, a, b, delta):
    """Squared radius of the Gaussian ball for set (a, b); negative if empty."""
    return (delta - _gauss_cost(P1, P2, a, b)) / (b - a)


@njit(cache=True)
def center_dist_sq(P1, a1, b1, a2, b2):
    m1 = b1 - a1
    m2 = b2 - a2
    d2 = 0.0
    for k in range(P1.shape[1]):
        d = (P1[b1, k] - P1[a1, k]) / m1 - (P1[b2, k] - P1[a2, k]) / m2
        d2 += d * d
    return d2


@njit(cache=True)
def balls_disjoint(d2, r1sq, r2sq):
    if r1sq < 0.0 or r2sq < 0.0:
        return True
    return np.sqrt(d2) > np.sqrt(r1sq) + np.sqrt(r2sq)


@njit(cache=True)
def ball_inside(d2, r1sq, r2sq):
    """Whether ball 1 lies inside ball 2 (an empty ball 1 always does)."""
    if r1sq < 0.0:
        return True
    if r2sq < 0.0:
        return False
    r1 = np.sqrt(r1sq)
    r2 = np.sqrt(r2sq)
    return r1 <= r2 and np.sqrt(d2) <= r2 - r1


@njit(cache=True, inline="always")
def best_cost_best_tau(P1, P2, code, phi, qhat, beta, cand, L, t, costs):
    """Minimise ``Q[a] + C(a, t) + beta`` over live candidates; ties keep the smallest."""
    if code == GAUSSIAN:
        for idx in range(L):
            costs[idx] = _gauss_cost(P1, P2, cand[idx], t)
    else:
        for idx in range(L):
            costs[idx] = segment_cost(P1, P2, code, phi, cand[idx], t)
    best = np.inf
    tau = -1
    for idx in range(L):
        v = qhat[cand[idx]] + costs[idx] + beta
        if v < best:
            best = v
            tau = cand[idx]
    return best, tau


@njit(cache=True, inline="always")
def _update_rect(inter, excl, P1, P2, code, phi, qhat, q_t, a, t, cand, idx, L, w,
                 future, past, rf, rp, lo, hi):
    n_inter = 0
    n_excl = 0
    if future == FUTURE_ALL:
        for j in range(idx + 1, L):
            b = cand[j]
            n_inter += 1
            if not inter(P1, P2, code, phi, a, b, qhat[b] - qhat[a], lo, hi):
                return False, n_inter, n_excl
    n_inter += 1
    if not inter(P1, P2, code, phi, a, t, q_t - qhat[a], lo, hi):
        return False, n_inter, n_excl
    if future == FUTURE_LAST_RANDOM:
        n_inter += 1
        if rf > 0:
            b = t if rf == L - idx else cand[idx + rf]
            dq = q_t - qhat[a] if b == t else qhat[b] - qhat[a]
            if not inter(P1, P2, code, phi, a, b, dq, lo, hi):
                return False, n_inter, n_excl
    if past == PAST_ALL:
        for j in range(w):
            u = cand[j]
            n_excl += 1
            if not excl(P1, P2, code, phi, u, a, qhat[a] - qhat[u], lo, hi):
                return False, n_inter, n_excl
    elif past == PAST_RANDOM and rp >= 0:
        u = cand[rp]
        n_excl += 1
        if not excl(P1, P2, code, phi, u, a, qhat[a] - qhat[u], lo, hi):
            return False, n_inter, n_excl
    return True, n_inter, n_excl


@njit(cache=True)
def _update_ball(P1, P2, qhat, q_t, cost_at, a, t, cand, idx, L, w,
                 future, past, rf, rp):
    # The testing set is the ball of the most recent future set (a, t).
    n_inter = 1
    n_excl = 0
    r_sq = (q_t - qhat[a] - cost_at) / (t - a)
    if r_sq < 0.0:
        return False, n_inter, n_excl
    if future == FUTURE_ALL:
        for j in range(idx + 1, L):
            b = cand[j]
            n_inter += 1
            rb = ball_radius_sq(P1, P2, a, b, qhat[b] - qhat[a])
            if balls_disjoint(center_dist_sq(P1, a, t, a, b), r_sq, rb):
                return False, n_inter, n_excl
    elif future == FUTURE_LAST_RANDOM:
        n_inter += 1
        if rf > 0 and rf < L - idx:
            b = cand[idx + rf]
            rb = ball_radius_sq(P1, P2, a, b, qhat[b] - qhat[a])
            if balls_disjoint(center_dist_sq(P1, a, t, a, b), r_sq, rb):
                return False, n_inter, n_excl
    if past == PAST_ALL:
        for j in range(w):
            u = cand[j]
            n_excl += 1
            ru = ball_radius_sq(P1, P2, u, a, qhat[a] - qhat[u])
            if ball_inside(center_dist_sq(P1, a, t, u, a), r_sq, ru):
                return False, n_inter, n_excl
    elif past == PAST_RANDOM and rp >= 0:
        u = cand[rp]
        n_excl += 1
        ru = ball_radius_sq(P1, P2, u, a, qhat[a] - qhat[u])
        if ball_inside(center_dist_sq(P1, a, t, u, a), r_sq, ru):
            return False, n_inter, n_excl
    return True, n_inter, n_excl


@njit(cache=True)
def _now():
    with objmode(t="float64"):
        t = time.perf_counter()
    return t


@njit(cache=True)
def solve_run(P1, P2, code, phi, beta, method, future, past, seed, time_limit,
              record, rec_lo, rec_hi):
    """Penalised optimal partitioning with the selected pruning rule.

    At step ``t`` the newest candidate ``t-1`` joins the list, Q[t] and the
    best last change are computed over the list, then every candidate is
    tested in increasing order (removals take effect immediately). For the
    geometric methods the future sets of candidate ``a`` are ``(a, b)`` for
    the later live ``b`` plus ``(a, t)``, the past sets ``(u, a)`` for the
    earlier survivors ``u``.

    Returns ``(qhat, tauhat, counts, pruned_at, inter_ops, excl_ops, t_done)``;
    ``t_done < n`` signals that ``time_limit`` seconds elapsed first.
    """
    n = P1.shape[0] - 1
    p = P1.shape[1]
    qhat = np.zeros(n + 1)
    tauhat = np.zeros(n + 1, dtype=np.int64)
    counts = np.zeros(n + 1, dtype=np.int64)
    pruned_at = np.full(n, n + 1, dtype=np.int64)
    inter_ops = np.zeros(n + 1, dtype=np.int64)
    excl_ops = np.zeros(n + 1, dtype=np.int64)
    cand = np.empty(n, dtype=np.int64)
    costs = np.empty(n)
    lo_dom, hi_dom = domain_bounds(code)
    if method == METHOD_GEOM_R:
        box_lo = np.empty((n, p))
        box_hi = np.empty((n, p))
    else:
        box_lo = np.empty((1, p))
        box_hi = np.empty((1, p))
    np.random.seed(seed)
    timed = np.isfinite(time_limit)
    start = _now() if timed else 0.0
    L = 0
    for t in range(1, n + 1):
        if timed and t % _TIME_CHECK_EVERY == 0:
            if _now() - start > time_limit:
                return qhat, tauhat, counts, pruned_at, inter_ops, excl_ops, t - 1
        a_new = t - 1
        cand[L] = a_new
        L += 1
        if method == METHOD_GEOM_R:
            for k in range(p):
                box_lo[a_new, k] = lo_dom
                box_hi[a_new, k] = hi_dom
        q_t, tau = best_cost_best_tau(P1, P2, code, phi, qhat, beta, cand, L, t, costs)
        qhat[t] = q_t
        tauhat[t] = tau
        if method == METHOD_OP:
            counts[t] = L
            continue
        w = 0
        n_inter = 0
        n_excl = 0
        for idx in range(L):
            a = cand[idx]
            rf = -1
            rp = -1
            if method >= METHOD_GEOM_S:
                if future == FUTURE_LAST_RANDOM:
                    rf = np.random.randint(0, L - idx + 1)
                if past == PAST_RANDOM and w > 0:
                    rp = np.random.randint(0, w)
            # inequality rule: emptiness of the most recent future set
            alive = qhat[a] + costs[idx] < q_t
            if alive and method == METHOD_GEOM_R:
                if code == GAUSSIAN:
                    alive, ni, ne = _update_rect(
                        _rect_inter_gauss, _rect_excl_gauss, P1, P2, code, phi, qhat, q_t, a, t,
                        cand, idx, L, w, future, past, rf, rp, box_lo[a], box_hi[a])
                else:
                    alive, ni, ne = _update_rect(
                        _rect_inter_count, _rect_excl_count, P1, P2, code, phi, qhat, q_t, a, t,
                        cand, idx, L, w, future, past, rf, rp, box_lo[a], box_hi[a])
                n_inter += ni
                n_excl += ne
            elif alive and method == METHOD_GEOM_S:
                alive, ni, ne = _update_ball(
                    P1, P2, qhat, q_t, costs[idx], a, t, cand, idx, L, w,
                    future, past, rf, rp)
                n_inter += ni
                n_excl += ne
            if alive:
                cand[w] = a
                w += 1
            else:
                pruned_at[a] = t
        L = w
        counts[t] = L
        inter_ops[t] = n_inter
        excl_ops[t] = n_excl
        if record and method == METHOD_GEOM_R:
            for idx in range(L):
                a = cand[idx]
                for k in range(p):
                    rec_lo[t, a, k] = box_lo[a, k]
                    rec_hi[t, a, k] = box_hi[a, k]
    return qhat, tauhat, counts, pruned_at, inter_ops, excl_ops, n
