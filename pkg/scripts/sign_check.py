"""Compare the per-agent beta limits of the two sign conventions for the reference signals.

The cancelling convention gives every agent a zero limit; the flipped one
doubles the Fresnel integral instead, so the network sum drifts away from zero
and the consensus value moves off the true average.
"""
import argparse
import math

from cpl.reference import REFERENCE_AVERAGE, five_agent_graph, fresnel_value, reference_scenario
from cpl.signals import network_admissibility
from cpl.sim import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=float, default=60.0, help="horizon for the limit estimates")
    ap.add_argument("--simulate", action="store_true", help="also report the simulated consensus value")
    args = ap.parse_args()
    g = five_agent_graph()
    d = g.out_degree()
    print(f"{'agent':>5s} {'d_out*I':>10s} {'beta(cancel)':>13s} {'beta(flip)':>11s}")
    reports = {}
    for corrected in (True, False):
        s = reference_scenario(corrected=corrected)
        reports[corrected] = network_admissibility(list(zip(s.f, s.g)), g, horizon=args.horizon)
    for l in g.nodes:
        integral = d[l - 1] * fresnel_value(l * math.pi / 12, l * math.pi)
        print(f"{l:5d} {integral:10.5f} {reports[True].beta[l - 1]:13.2e} {reports[False].beta[l - 1]:11.5f}")
    for corrected, rep in reports.items():
        label = "cancel" if corrected else "flip"
        shift = rep.sum_beta / g.n
        print(f"{label:6s} sum beta {rep.sum_beta:+.5f}  predicted limit {REFERENCE_AVERAGE + shift:.5f}"
              f"  admissible {rep.admissible}")
        if args.simulate:
            tr = simulate(reference_scenario(horizon=30.0, corrected=corrected))
            print(f"{'':6s} simulated x(T) {', '.join(f'{v:.4f}' for v in tr.x[-1])}")


if __name__ == "__main__":
    main()
