"""Quick end-to-end check of the sscr extension module."""
import math

import sscr


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    close(sscr.q_function(0.0), 0.5, 1e-15)
    close(sscr.q_inverse(sscr.q_function(1.3)), 1.3, 1e-9)
    close(sscr.waterfill(2.0, 0.5), 1.0 / (0.5 * math.log(2)) - 0.5, 1e-12)

    eta = sscr.invert_pd(0.9)
    close(sscr.prob_detection(eta), 0.9, 1e-9)
    assert sscr.prob_false_alarm(eta) < 0.9

    params = sscr.SystemParams()
    res = sscr.select_eta(params)
    assert res.converged, res
    close(res.alpha * res.c0 + res.beta * res.c1, res.c_s, 1e-12)
    assert res.p_bar <= params.p_av * (1 + 1e-6)

    rows, best = sscr.sweep_tau(params, [2e-4, 5e-4, 1e-3, 5e-3], 0.9)
    assert all(r.status == "ok" for r in rows)
    assert rows[best].xi_s == max(r.xi_s for r in rows)

    try:
        sscr.sweep_tau(params, [1e-7, 2e-7], 0.99)
    except sscr.InfeasibleError:
        pass
    else:
        raise AssertionError("expected InfeasibleError")

    pf, pd, se_pf, se_pd = sscr.simulate_detector(eta, trials=20000, seed=3)
    assert abs(pd - 0.9) < 6 * se_pd + 0.02

    csv, code = sscr.run_experiment("optimize", {"p_av_db": 12.0})
    assert code == 0 and "c_s" in csv

    try:
        sscr.SystemParams(pi1=1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print("smoke test ok:", res)


if __name__ == "__main__":
    main()
