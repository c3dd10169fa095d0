"""Joint 2^d-tree over target (row) and source (column) points."""

from dataclasses import dataclass, field

import numpy as np

MAX_DEPTH = 30


@dataclass
class Node:
    id: int
    parent: int
    depth: int
    center: np.ndarray
    half: float
    rows: np.ndarray
    cols: np.ndarray
    children: list = field(default_factory=list)

    @property
    def is_leaf(self):
        return not self.children

    @property
    def circumradius(self):
        return self.half * np.sqrt(len(self.center))


class IndexTree:
    """Nodes are numbered in breadth-first order; children of a node appear
    in lexicographic orthant order (x-half most significant, lower half
    first). Every row and column index lives in exactly one leaf."""

    def __init__(self, nodes, dim, capacity, n_rows, n_cols):
        self.nodes = nodes
        self.dim = dim
        self.capacity = capacity
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.depth = max(nd.depth for nd in nodes)
        self.overfull = []

    def __len__(self):
        return len(self.nodes)

    @property
    def root(self):
        return self.nodes[0]

    def leaves(self):
        return [nd for nd in self.nodes if nd.is_leaf]

    def level_blocks(self, level):
        """Blocks active at a level: the nodes at that depth plus leaves that
        stop shallower, sorted by id."""
        return [nd for nd in self.nodes
                if nd.depth == level or (nd.is_leaf and nd.depth < level)]

    def sub_blocks(self, node, level):
        """Level-(level+1) blocks that make up ``node`` at ``level``."""
        if node.is_leaf:
            return [node]
        return [self.nodes[c] for c in node.children]

    def row_order(self):
        return np.concatenate([nd.rows for nd in self.leaves()]).astype(int)

    def col_order(self):
        return np.concatenate([nd.cols for nd in self.leaves()]).astype(int)

    def check_partition(self):
        """Raise if the leaves do not partition the row and column indices."""
        r = np.sort(self.row_order())
        c = np.sort(self.col_order())
        if not (np.array_equal(r, np.arange(self.n_rows))
                and np.array_equal(c, np.arange(self.n_cols))):
            raise AssertionError("leaves do not partition the indices")

    # ---------------------------------------------------------- text format
    def dumps(self):
        out = [f"hbsls-tree 1 dim {self.dim} capacity {self.capacity} "
               f"rows {self.n_rows} cols {self.n_cols} nodes {len(self.nodes)}"]
        for nd in self.nodes:
            c = " ".join(repr(float(v)) for v in nd.center)
            out.append(f"node {nd.id} {nd.parent} {nd.depth} {repr(float(nd.half))} {c}")
            out.append("rows " + " ".join(map(str, nd.rows)))
            out.append("cols " + " ".join(map(str, nd.cols)))
        return "\n".join(out) + "\n"

    @classmethod
    def loads(cls, text):
        lines = text.splitlines()
        head = lines[0].split()
        if head[:2] != ["hbsls-tree", "1"]:
            raise ValueError("not a version-1 tree file")
        kv = dict(zip(head[2::2], map(int, head[3::2])))
        nodes = []
        for i in range(kv["nodes"]):
            a = lines[1 + 3 * i].split()
            dim = kv["dim"]
            rows = np.array(lines[2 + 3 * i].split()[1:], dtype=int)
            cols = np.array(lines[3 + 3 * i].split()[1:], dtype=int)
            nodes.append(Node(int(a[1]), int(a[2]), int(a[3]),
                              np.array(a[5:5 + dim], dtype=float), float(a[4]),
                              rows, cols))
        for nd in nodes:
            if nd.parent >= 0:
                nodes[nd.parent].children.append(nd.id)
        return cls(nodes, kv["dim"], kv["capacity"], kv["rows"], kv["cols"])


def _bounding_cube(pts):
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    half = 0.5 * float(np.max(hi - lo))
    if half == 0.0:
        half = 0.5
    # slight inflation keeps every point strictly inside
    half *= 1 + 1e-12
    return 0.5 * (lo + hi), half


def build_tree(targets, sources, capacity=64, depth_limit=MAX_DEPTH):
    """Adaptive tree on targets and sources jointly.

    A box splits while its combined row and column count exceeds
    ``capacity``. Points on a bisection plane go to the lower child;
    empty children are dropped.
    """
    if capacity < 1:
        raise ValueError("leaf capacity must be positive")
    tx = np.asarray(targets.coords if hasattr(targets, "coords") else targets, float)
    sx = np.asarray(sources.coords if hasattr(sources, "coords") else sources, float)
    if tx.shape[1] != sx.shape[1]:
        raise ValueError("targets and sources differ in dimension")
    if len(tx) + len(sx) == 0:
        raise ValueError("empty point sets")
    for a in (tx, sx):
        if not np.all(np.isfinite(a)):
            raise ValueError("points contain non-finite coordinates")
    d = tx.shape[1]
    center, half = _bounding_cube(np.vstack([tx, sx]))
    nodes = [Node(0, -1, 0, center, half, np.arange(len(tx)), np.arange(len(sx)))]
    queue = [0]
    head = 0
    overfull = []
    while head < len(queue):
        nd = nodes[queue[head]]
        head += 1
        if nd.rows.size + nd.cols.size <= capacity:
            continue
        if nd.depth >= depth_limit:
            overfull.append(nd.id)
            continue
        rcode = _orthant(tx[nd.rows], nd.center, d)
        ccode = _orthant(sx[nd.cols], nd.center, d)
        for code in range(2**d):
            r = nd.rows[rcode == code]
            c = nd.cols[ccode == code]
            if r.size + c.size == 0:
                continue
            bits = [(code >> (d - 1 - k)) & 1 for k in range(d)]
            off = np.array([1.0 if b else -1.0 for b in bits]) * nd.half / 2
            child = Node(len(nodes), nd.id, nd.depth + 1, nd.center + off,
                         nd.half / 2, r, c)
            nd.children.append(child.id)
            nodes.append(child)
            queue.append(child.id)
    tree = IndexTree(nodes, d, capacity, len(tx), len(sx))
    tree.overfull = overfull    # leaves stopped by the depth cap
    return tree


def _orthant(pts, center, d):
    code = np.zeros(len(pts), dtype=int)
    for k in range(d):
        code = 2 * code + (pts[:, k] > center[k])
    return code


def smaller_side_depth(targets, sources, capacity=64):
    """Depth of the tree built on the smaller of the two point sets alone."""
    small = targets if len(targets) <= len(sources) else sources
    empty = np.zeros((0, small.dim))
    return build_tree(small.coords, empty, capacity).depth
