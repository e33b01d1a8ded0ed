"""Independent reference implementations used only by the tests.

These enumerate pairs one at a time straight from the triple list and never
call the package's structure builders.
"""

import math

import networkx as nx

INF = math.inf


def units(triples):
    ents = []
    for h, _, t in triples:
        for e in (h, t):
            if e not in ents:
                ents.append(e)
    return ents, [("rel", i) for i in range(len(triples))]


def entity_labels(triples):
    """R^E by enumerating every unit pair and applying the case definitions."""
    ents, rels = units(triples)
    allu = [("ent", e) for e in ents] + rels

    def incident(e, ri):
        h, _, t = triples[ri]
        return e in (h, t)

    out = []
    for a in allu:
        row = []
        for b in allu:
            if a == b:
                row.append("SELF")
            elif a[0] == "ent" and b[0] == "ent":
                linked = any({a[1], b[1]} <= {h, t} for h, _, t in triples)
                row.append("ENT_ENT" if linked else "NONE")
            elif a[0] == "ent" and b[0] == "rel":
                row.append("ENT_REL" if incident(a[1], b[1]) else "NONE")
            elif a[0] == "rel" and b[0] == "ent":
                row.append("REL_ENT" if incident(b[1], a[1]) else "NONE")
            else:
                row.append("NONE")
        out.append(row)
    return out


def adjacency(triples):
    ents, rels = units(triples)
    allu = [("ent", e) for e in ents] + rels
    out = []
    for a in allu:
        row = []
        for b in allu:
            if a == b:
                row.append(1)
                continue
            pair = {a, b}
            hit = any(pair == {("ent", h), ("rel", i)} or pair == {("rel", i), ("ent", t)}
                      for i, (h, _, t) in enumerate(triples))
            row.append(1 if hit else 0)
        out.append(row)
    return out


def word_nodes(triples):
    """(triple, role, offset) per word node, in linearization order."""
    nodes = []
    for i, tr in enumerate(triples):
        for role, text in enumerate(tr):
            for off, _ in enumerate(text.split()):
                nodes.append((i, role, off))
    return nodes


def word_distances(triples):
    nodes = word_nodes(triples)
    g = nx.DiGraph()
    g.add_nodes_from(range(len(nodes)))
    for a, (ia, ra, _) in enumerate(nodes):
        for b, (ib, rb, _) in enumerate(nodes):
            if ia == ib and rb == ra + 1:
                g.add_edge(a, b)
    lengths = dict(nx.all_pairs_shortest_path_length(g))
    return [[lengths[a].get(b, INF) for b in range(len(nodes))] for a in range(len(nodes))]


def word_labels(triples, d_clip=16, p_clip=16):
    """R^N by the case list: SELF, same occurrence, both unreachable, <=, else."""
    nodes = word_nodes(triples)
    dist = word_distances(triples)
    out = []
    for i, (ti, ri, oi) in enumerate(nodes):
        row = []
        for j, (tj, rj, oj) in enumerate(nodes):
            dij, dji = dist[i][j], dist[j][i]
            if i == j:
                row.append("SELF")
            elif (ti, ri) == (tj, rj):
                p = oj - oi
                row.append(f"SAME_FWD({min(p, p_clip)})" if p > 0 else f"SAME_BWD({min(-p, p_clip)})")
            elif dij == INF and dji == INF:
                row.append("UNREACHABLE")
            elif dij <= dji:
                row.append(f"FWD({min(dij, d_clip)})")
            else:
                row.append(f"BWD({min(dji, d_clip)})")
        out.append(row)
    return out
