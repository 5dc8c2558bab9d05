"""Smoke test for the rmcsc_py extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`.
"""

import rmcsc_py as rm

TOY = """
gamma = 4
kappa = 8
z = 7
L = 5

[[stage]]
m_new = 2

[mc2]
seed = 7
reference_transitions = 40
partition_transitions = 200
lift_transitions = 400
"""


def main():
    plan = rm.Plan.from_toml(TOY)
    assert plan.memories() == [2]
    assert plan.rate_and_length(0) == (280, "0.3000")

    stages = plan.grade()
    offset, weights, e6, e8 = stages[0]
    assert offset == 0 and abs(sum(weights) - 1.0) < 1e-9
    assert abs(rm.expected_cycles(4, 8, weights, 6) - e6) < 1e-6 * e6

    (art,) = plan.design()
    c4, c6, c8 = art.cycles()
    assert c4 == 0, c4
    code = art.code()
    assert code.n_cols == 280
    assert code.count_cycles(6) == c6

    back = rm.Code.from_alist(code.to_alist())
    assert back.nnz == code.nnz
    assert rm.Artifact.from_json(art.to_json()).partition() == art.partition()

    word, converged, _ = code.decode([4.0] * code.n_cols)
    assert converged and not any(word)

    pts = code.simulate([0.0, 2.0], max_frames=512, min_frame_errors=10)
    assert pts[0]["fer"] >= pts[1]["fer"]
    assert rm.reduction(0, 10) == 100.0
    assert rm.sharing_savings([art]) == 0.0
    print("smoke test passed:", plan, "cycles", (c4, c6, c8))


if __name__ == "__main__":
    main()
