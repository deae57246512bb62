"""From geolocated outbreak reports to the most probable infection networks.

Uses the bundled synthetic outbreak: 500 reports scattered over eight regions,
two of which report their first case on the same day.
"""
import datetime as dt

from hiddencascade import GibbsConfig, PoissonProfile, run_chain, summarize
from hiddencascade.ingest import fixture_path, load_events, prepare_inputs

events = load_events(fixture_path())
res = prepare_inputs(events, k=8, seed=0, start=dt.date(2004, 1, 1), end=dt.date(2007, 12, 31))

for r, (lat, lon) in enumerate(res.regions.centroids):
    state = "kept" if res.keep[r] else "excluded (silent during the study period)"
    print(f"R{r + 1}: centre ({lat:6.1f}, {lon:7.1f}), {int((res.regions.labels == r).sum()):3d} reports, {state}")

net, obs = res.net, res.obs
print("\nsources:", ", ".join(f"{net.label(s)} (day {net.source_time(s)})" for s in net.sources))

# Link priors come from inverse distances between reporting sites, so nearby
# regions start out with stronger links.
i = net.non_sources[0]
for j in net.candidate_parents[i]:
    mean = net.hyper_a[i, j] * net.hyper_b[i, j]
    print(f"  prior mean strength {net.label(j)} -> {net.label(i)}: {mean:.2e}")

chain = run_chain(net, obs, PoissonProfile(), GibbsConfig(total_iters=20_000, burn_in=1_000, seed=1))
post = summarize(chain, top_k=4)

print("\nestimated infection day per region:")
for k in range(net.n_nodes):
    print(f"  {net.label(k)}: day {post.t_hat[k]}")

print("\nmost probable infection networks:")
for z, w in post.configurations:
    links = ", ".join(f"{net.label(p)}->{net.label(c)}" for c, p in enumerate(z) if p >= 0)
    print(f"  {w:6.1%}  {links}")
