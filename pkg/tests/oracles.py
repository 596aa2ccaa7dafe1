"""Naive reference implementations used only by the tests."""
import math


def brute_rates(bona, spoof):
    pts = sorted(set(bona) | set(spoof))
    thresholds = pts + [math.nextafter(pts[-1], math.inf)]
    rows = []
    for t in thresholds:
        far = sum(1 for s in spoof if s >= t) / len(spoof)
        frr = sum(1 for b in bona if b < t) / len(bona)
        rows.append((t, far, frr))
    return rows


def brute_eer(bona, spoof):
    rows = brute_rates(bona, spoof)
    prev = None
    for t, far, frr in rows:
        d = far - frr
        if d == 0:
            return far
        if d < 0:
            pt, pfar, pfrr = prev
            pd = pfar - pfrr
            s = pd / (pd - d)
            return pfar + s * (far - pfar)
        prev = (t, far, frr)
    raise AssertionError("no crossing")


def brute_min_tdcf(bona, spoof, costs):
    c1 = costs.p_target * (costs.c_miss_cm - costs.c_miss_asv * costs.p_miss_asv) - costs.p_nontarget * costs.c_fa_asv * costs.p_fa_asv
    c2 = costs.c_fa_cm * costs.p_spoof * (1 - costs.p_miss_spoof_asv)
    best = math.inf
    for t in [-math.inf] + sorted(set(bona) | set(spoof)) + [math.inf]:
        miss = sum(1 for b in bona if b < t) / len(bona)
        fa = sum(1 for s in spoof if s >= t) / len(spoof)
        best = min(best, (c1 * miss + c2 * fa) / min(c1, c2))
    return best
