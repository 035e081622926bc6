"""Smoke test for the nlqc_py extension. Run after `pip install -e crates/py --no-build-isolation`."""

import math

import nlqc_py as nq


def main():
    model = nq.Model.brickwork(8, 1, seed=21)
    spread = model.exact_spread()
    assert spread <= 2 * math.pi / 8 + 1e-9, spread

    dec = model.decompose()
    residual = dec.verify(trials=3, seed=1)
    assert residual <= 1e-9, residual
    assert dec.manifest()["order"] == ["U_N", "U_S", "U_W", "U_E"]

    run = dec.run_protocol(seed=2)
    assert run["trace_distance"] <= 1e-9 and run["audit_ok"], run
    try:
        dec.run_protocol(seed=2, fault="early_post")
    except nq.LocalityError as e:
        assert "event" in str(e)
    else:
        raise AssertionError("fault not detected")

    fit = nq.Model.tfim(6, 0.25, 0.25, 0.0).lr_profile([0.1 * k for k in range(1, 9)], [1, 2, 3])
    assert fit.residual <= 1e-9 and fit.v > 0

    fids = [nq.PortResource(n).average_fidelity_choi() for n in (1, 2, 4)]
    assert abs(fids[0] - 0.5) < 1e-12 and fids[0] < fids[1] < fids[2], fids
    r = nq.PortResource(2)
    assert abs(r.average_fidelity_trajectories() - fids[1]) < 1e-6

    amp = 1 / math.sqrt(2)
    _, f = nq.teleport_normal([complex(amp, 0), complex(0, amp)], seed=3)
    assert abs(f - 1) < 1e-12

    rep = nq.cascade([1, 0], [0, 1], 2, otp=True, seed=4)
    assert abs(rep["mutual_information"]) < 1e-9 and rep["otp_check"] is True

    toy = nq.toy_protocol(blocks=2, target_len=10, seed=5)
    assert toy["verdict"]["logical_match"]

    cert = nq.compose_certificate(0.1, 0.2, 0.3, 0.4)
    assert abs(cert["total"] - 1.0) < 1e-12
    try:
        nq.compose_certificate(-1.0, 0, 0, 0)
    except nq.NlqcError:
        pass
    else:
        raise AssertionError("negative input accepted")

    print(f"nlqc_py {nq.__version__}: smoke test passed (F_avg {', '.join(f'{x:.4f}' for x in fids)})")


if __name__ == "__main__":
    main()
