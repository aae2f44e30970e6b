"""Differential cache testing against a fleet where one member skips bailiwick checks.

Four reference resolvers run in forward-only mode. After each case their
caches are dumped, a DiffVector is computed, and the vectors are clustered.
Cases where only the lax resolver cached a foreign record stand out as
nonzero clusters.
"""

import numpy as np

from qrfuzz.harness import CampaignConfig, iter_outcomes
from qrfuzz.oracles import ClusterConfig, cache_oracle, elbow

fleet = ("reference:name=strict1", "reference:name=strict2,dump=bind",
         "reference:name=strict3,dump=unbound", "reference:name=lax,accept-out-of-bailiwick")
cfg = CampaignConfig(mode="forward-only", unit_count=4, case_count=600, seed=3, adapters=fleet)

by_case = {o.case_id: o.traces for o in iter_outcomes(cfg)}
roster = ["strict1", "strict2", "strict3", "lax"]
res = cache_oracle(by_case, roster, ClusterConfig(7))

print("SSE curve:", ", ".join(f"k={k}:{s:.1f}" for k, s in res.curve))
print("elbow at k =", elbow(res.curve))
for c in range(res.clusters.k):
    members = res.clusters.members(c)
    print(f"cluster {c}: {len(members):4d} cases, centroid {np.round(res.clusters.centroids[c], 2)}")

flagged = sorted({f.case_id for f in res.findings})
print(f"\n{len(flagged)} cases where the caches disagree")
if flagged:
    cid = flagged[0]
    traces = {t.resolver: t for t in by_case[cid]}
    extra = traces["lax"].cache.key_set() - traces["strict1"].cache.key_set()
    print(f"case {cid}: records only the lax resolver kept:")
    for owner, rtype, rdata in sorted(extra):
        print(f"  {owner} type={rtype} {rdata}")
