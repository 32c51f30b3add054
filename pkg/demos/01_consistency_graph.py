"""Build a consistency graph over a synthetic label space and look inside it.

Every interaction node links to the root, its action and its object. On top
of that each node links to its most similar peers of the same kind, where
similarity is the cosine between joint visual-semantic features. Graph
attention then mixes word vectors along those edges.

    python demos/01_consistency_graph.py
"""
import numpy as np

from consnet.gat import GatLayer, attention_coefficients
from consnet.graph import neighborhood_mask
from consnet.harness import compact_config, prepare, synth_corpus

cfg = compact_config("UC", k=8, seed=0)
corpus = synth_corpus(cfg.synth)
prep = prepare(cfg, corpus)
space, graph = prep.space, prep.graph

print(f"{len(space.actions)} actions, {len(space.objects)} objects, {space.C} interactions")
print(f"{graph.num_nodes} nodes, {len(graph.edges())} undirected edges")
tags = {}
for _, _, tag in graph.edges():
    tags[tag] = tags.get(tag, 0) + 1
print("edges by kind:", dict(sorted(tags.items())))

t = 0
a, o = space.hois[t]
node = graph.num_nodes - space.C + t
names = [space.node_label(n) for n in space.nodes()]
print(f"\ninteraction '{space.actions[a]} {space.objects[o]}' is node {node}; neighbours:")
for j in graph.neighbors(node):
    print(f"  {j:3d}  {names[j]}")

# one untrained attention layer over the node word vectors
layer = GatLayer(np.random.default_rng(0), prep.Z.shape[1], 16, heads=2)
mu = attention_coefficients(prep.Z, neighborhood_mask(graph), layer)[0]
row = mu[node]
print("\nhead-0 attention of that node (sums to 1 over its neighbours):")
for j in np.flatnonzero(row):
    print(f"  {names[j]:<20s} {row[j]:.3f}")
print(f"  total {row.sum():.12f}")

unseen = sorted(prep.split.unseen_hoi_ids)
print(f"\nheld out for zero-shot evaluation: {len(unseen)} interactions, e.g. "
      + ", ".join(f"{space.actions[space.hois[i][0]]} {space.objects[space.hois[i][1]]}" for i in unseen[:4]))
