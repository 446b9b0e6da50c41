# %% [markdown]
# # Contact networks and random clusters
#
# Risk groups sit at the hubs of a preferential-attachment graph, and the
# hub's share of all edge endpoints becomes the group's attachment
# probability. On small graphs we can also enumerate the random-cluster
# measure exactly and check positive association (FKG) by brute force.

# %%
from lockdown import network as net

graph = net.ba_generate(500, 1, seed=1)
print(f"{graph.n_vertices} vertices, {graph.n_edges} edges, connected: {graph.is_connected()}")
print("hub attachment probabilities:", [round(p, 4) for p in net.hub_attach_probabilities(graph, 3)])

big = [net.ba_generate(10_000, 2, seed=s) for s in range(5)]
print(f"fitted degree tail exponent: {net.degree_tail_exponent(big):.2f} (theory: 3)")

# %% [markdown]
# A cluster weight q > 1 favours configurations with many open components.
# On a single edge with rho = 1/2 and q = 2 the open state has weight 1 and
# the closed state has weight 2.

# %%
edge = net.Graph(2, ((0, 1),))
print("P(edge open) =", net.random_cluster_prob(edge, net.ClusterParams(0.5, 2.0), net.EdgeConfig((1,))))

triangle = net.Graph(3, ((0, 1), (1, 2), (0, 2)))
probs = net.cluster_distribution(triangle, net.ClusterParams(0.5, 2.0))
for i, p in enumerate(probs):
    cfg = net.EdgeConfig.from_index(i, 3)
    print(cfg.bits, f"{p:.4f}", "components:", net.count_open_components(triangle, cfg))

# %%
sweep = net.fkg_sweep([triangle, edge], (1.0, 2.0, 3.0), (0.2, 0.8))
print(f"FKG: {sweep.n_checks} event pairs, {sweep.n_failures} failures, "
      f"smallest margin {sweep.worst_margin:.3g}")
