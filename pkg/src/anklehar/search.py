"""Exhaustive parameter-count matching over families of architectures.

A family is a set of *trunks* (everything up to the flattened feature vector)
followed by a dense tail of 0..2 hidden layers and the softmax output.  For a
trunk with ``P`` parameters emitting ``F`` features and ``K`` classes the
total is

    0 hidden:  P + F*K + K
    1 hidden:  P + K + h*(F + 1 + K)
    2 hidden:  P + K + h1*(F + 1) + h2*(h1 + 1 + K)

so for each trunk (and each ``h1``) the matching width is found by a single
division instead of a scan.  Trunks with equal ``(P, F)`` are solved once.

Matches are ordered by ``(total layers, trunk widths, hidden widths, ...)``;
see each family's ``key_columns``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .nn.spec import (
    LayerSpec,
    ModelSpec,
    conv1d,
    dense,
    dropout,
    flatten,
    global_maxpool,
    layer_shapes,
    maxpool,
    param_count,
    recurrent,
)


@dataclass(frozen=True)
class Candidate:
    trunk: tuple[LayerSpec, ...]
    hidden: tuple[int, ...]
    count: int
    delta: int  # count - target
    hidden_activation: str = "relu"

    def to_spec(self, name: str, input_shape=(200, 6), num_classes: int = 4, dropout_rate: float = 0.0) -> ModelSpec:
        """Materialise as a ModelSpec, inserting dropout after every hidden parametric layer."""
        layers = []
        for layer in self.trunk:
            layers.append(layer)
            if dropout_rate and layer.kind in ("Conv1D", "Dense", "SimpleRNN", "LSTM", "GRU"):
                layers.append(dropout(dropout_rate))
        for h in self.hidden:
            layers.append(dense(h, self.hidden_activation))
            if dropout_rate:
                layers.append(dropout(dropout_rate))
        layers.append(dense(num_classes, "softmax"))
        return ModelSpec(name, tuple(layers), input_shape=input_shape, num_classes=num_classes)

    def describe(self) -> str:
        parts = [layer.describe() for layer in self.trunk]
        parts += [f"Dense({h}, {self.hidden_activation})" for h in self.hidden]
        return " -> ".join(parts + ["Dense(out, softmax)"])


class CandidateList:
    """Sorted matches held as arrays; Candidates are built on access."""

    def __init__(self, family, trunks, widths, counts, target):
        self.family = family
        self.trunks = trunks
        self.widths = widths
        self.counts = counts
        self.target = target

    def __len__(self):
        return len(self.trunks)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        hidden = tuple(int(w) for w in self.widths[i] if w > 0)
        count = int(self.counts[i])
        return Candidate(self.family.trunk_layers(int(self.trunks[i])), hidden, count, count - self.target,
                         self.family.hidden_activation)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        return list(self) == list(other)


@dataclass
class TrunkTable:
    params: np.ndarray
    features: np.ndarray
    layers: np.ndarray


@dataclass
class SolveResult:
    target: int
    exact: CandidateList
    nearest: list[Candidate]
    evaluated_trunks: int

    @property
    def best(self) -> Candidate | None:
        if self.exact:
            return self.exact[0]
        return self.nearest[0] if self.nearest else None


class Family:
    """Base class: subclasses provide a trunk table and trunk materialisation."""

    input_shape = (200, 6)
    num_classes = 4
    min_hidden = 1
    max_hidden = 2
    max_width = 256
    hidden_activation = "relu"

    def trunk_table(self) -> TrunkTable:
        raise NotImplementedError

    def trunk_layers(self, i: int) -> tuple[LayerSpec, ...]:
        raise NotImplementedError

    def key_columns(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-trunk sort columns placed before and after the hidden widths."""
        raise NotImplementedError


class ListFamily(Family):
    """A handful of explicit trunks; order in the list breaks ties."""

    def __init__(self, trunks, input_shape=(200, 6), num_classes=4, min_hidden=1, max_hidden=2,
                 max_width=256, hidden_activation="relu"):
        self.trunks = [tuple(t) for t in trunks]
        self.input_shape = tuple(input_shape)
        self.num_classes = num_classes
        self.min_hidden = min_hidden
        self.max_hidden = max_hidden
        self.max_width = max_width
        self.hidden_activation = hidden_activation

    def trunk_table(self) -> TrunkTable:
        params, feats, layers = [], [], []
        for trunk in self.trunks:
            probe = ModelSpec("probe", trunk + (dense(self.num_classes, "softmax"),),
                              input_shape=self.input_shape, num_classes=self.num_classes)
            shapes = layer_shapes(probe)
            out_params = self.num_classes * shapes[-1][0][0] + self.num_classes
            params.append(param_count(probe) - out_params)
            feats.append(shapes[-1][0][0])
            layers.append(len(trunk))
        return TrunkTable(np.array(params, dtype=np.int64), np.array(feats, dtype=np.int64),
                          np.array(layers, dtype=np.int64))

    def trunk_layers(self, i):
        return self.trunks[i]

    def key_columns(self):
        n = len(self.trunks)
        return np.arange(n, dtype=np.int64)[:, None], np.zeros((n, 0), dtype=np.int64)


POOLS = (0, 2, 3, 4)  # 0 = no pooling
HEADS = ("flatten", "global_max")


class CnnSearchSpace(Family):
    """Conv1D(24, k=4) -> Conv1D(56, k=5) prefix with optional pools, an
    optional third convolution, a flatten or global-max head, and 1-2 hidden
    ReLU dense layers.

    Trunk ordering key: ``(third-conv filters, third-conv kernel)`` (0 when
    absent), then hidden widths, then pool sizes, then head (flatten first).
    """

    def __init__(self, prefix_filters=(24, 56), prefix_kernels=(4, 5), pools=POOLS, max_filters=128,
                 max_kernel=16, max_width=256, min_hidden=1, max_hidden=2):
        self.prefix_filters = tuple(prefix_filters)
        self.prefix_kernels = tuple(prefix_kernels)
        self.pools = tuple(pools)
        self.max_filters = max_filters
        self.max_kernel = max_kernel
        self.max_width = max_width
        self.min_hidden = min_hidden
        self.max_hidden = max_hidden
        self._rows = None

    def _build(self):
        (f1, f2), (k1, k2) = self.prefix_filters, self.prefix_kernels
        cin = self.input_shape[1]
        prefix = f1 * (k1 * cin + 1) + f2 * (k2 * f1 + 1)
        f3, k3, p3, head = np.meshgrid(
            np.arange(1, self.max_filters + 1), np.arange(1, self.max_kernel + 1),
            np.array(self.pools), np.arange(len(HEADS)), indexing="ij",
        )
        f3, k3, p3, head = (a.ravel() for a in (f3, k3, p3, head))
        cols = {name: [] for name in ("p1", "p2", "f3", "k3", "p3", "head", "params", "features", "layers")}

        def add(p1, p2, f3_, k3_, p3_, head_, params, features, layers):
            for name, val in zip(cols, (p1, p2, f3_, k3_, p3_, head_, params, features, layers)):
                cols[name].append(np.broadcast_to(np.asarray(val, dtype=np.int64), np.shape(params)).copy())

        for p1, p2 in product(self.pools, self.pools):
            length = self.input_shape[0] - k1 + 1
            if p1:
                length //= p1
            length -= k2 - 1
            if length < 1:
                continue
            if p2:
                length //= p2
            if length < 1:
                continue
            base_layers = 2 + (p1 > 0) + (p2 > 0) + 1
            for h in range(len(HEADS)):
                feats = length * f2 if HEADS[h] == "flatten" else f2
                add(p1, p2, 0, 0, 0, h, np.array([prefix]), np.array([feats]), np.array([base_layers]))
            l3 = length - k3 + 1
            valid = l3 >= 1
            pooled = np.where(p3 > 0, l3 // np.maximum(p3, 1), l3)
            valid &= pooled >= 1
            valid &= (p3 == 0) | (p3 <= l3)
            sel = np.flatnonzero(valid)
            params = prefix + f3[sel] * (k3[sel] * f2 + 1)
            feats = np.where(head[sel] == 0, pooled[sel] * f3[sel], f3[sel])
            layers = base_layers + 1 + (p3[sel] > 0)
            add(p1, p2, f3[sel], k3[sel], p3[sel], head[sel], params, feats, layers)
        self._rows = {name: np.concatenate(vals) for name, vals in cols.items()}

    @property
    def rows(self):
        if self._rows is None:
            self._build()
        return self._rows

    def trunk_table(self) -> TrunkTable:
        r = self.rows
        return TrunkTable(r["params"], r["features"], r["layers"])

    def trunk_layers(self, i):
        r = self.rows
        (f1, f2), (k1, k2) = self.prefix_filters, self.prefix_kernels
        layers = [conv1d(f1, k1)]
        if r["p1"][i]:
            layers.append(maxpool(int(r["p1"][i])))
        layers.append(conv1d(f2, k2))
        if r["p2"][i]:
            layers.append(maxpool(int(r["p2"][i])))
        if r["f3"][i]:
            layers.append(conv1d(int(r["f3"][i]), int(r["k3"][i])))
            if r["p3"][i]:
                layers.append(maxpool(int(r["p3"][i])))
        layers.append(flatten() if HEADS[r["head"][i]] == "flatten" else global_maxpool())
        return tuple(layers)

    def key_columns(self):
        r = self.rows
        return (np.column_stack([r["f3"], r["k3"]]),
                np.column_stack([r["p1"], r["p2"], r["p3"], r["head"]]))


def hybrid_family(cell: str = "SimpleRNN", units=(32, 16, 16)) -> ListFamily:
    """Conv prefix plus three recurrent layers, dense tail searched."""
    trunk = (conv1d(24, 4), conv1d(56, 5))
    trunk += tuple(recurrent(cell, u, "tanh", seq=i < len(units) - 1) for i, u in enumerate(units))
    return ListFamily([trunk], hidden_activation="tanh")


def dense_family(max_hidden: int = 1, min_hidden: int = 0) -> ListFamily:
    """Flatten followed directly by dense layers."""
    return ListFamily([(flatten(),)], min_hidden=min_hidden, max_hidden=max_hidden)


def _exact_widths(rem, feats, k, n_hidden, max_width):
    """Yield (group indices, widths array) of exact solutions for ``n_hidden`` layers."""
    if n_hidden == 0:
        g = np.flatnonzero(rem == feats * k)
        yield g, np.zeros((len(g), 0), dtype=np.int64)
    elif n_hidden == 1:
        div = feats + 1 + k
        h = rem // div
        g = np.flatnonzero((rem % div == 0) & (h >= 1) & (h <= max_width))
        yield g, h[g][:, None]
    else:
        active = np.arange(len(rem))
        for h1 in range(1, max_width + 1):
            r = rem[active] - h1 * (feats[active] + 1)
            keep = r >= h1 + 1 + k  # h2 >= 1 still reachable
            active, r = active[keep], r[keep]
            if not len(active):
                break
            div = h1 + 1 + k
            h2 = r // div
            ok = (r % div == 0) & (h2 <= max_width)
            g = active[ok]
            if len(g):
                yield g, np.column_stack([np.full(len(g), h1), h2[ok]])


def _near_widths(rem, feats, k, n_hidden, max_width):
    """Yield (group indices, widths, |delta|) for the closest widths per group."""
    groups = np.arange(len(rem))
    if n_hidden == 0:
        yield groups, np.zeros((len(rem), 0), dtype=np.int64), np.abs(feats * k - rem)
        return
    if n_hidden == 1:
        div = feats + 1 + k
        for h in (np.clip(rem // div, 1, max_width), np.clip(rem // div + 1, 1, max_width)):
            yield groups, h[:, None], np.abs(h * div - rem)
        return
    for h1 in range(1, max_width + 1):
        r = rem - h1 * (feats + 1)
        div = h1 + 1 + k
        for h2 in (np.clip(r // div, 1, max_width), np.clip(r // div + 1, 1, max_width)):
            yield groups, np.column_stack([np.full(len(rem), h1), h2]), np.abs(h2 * div - r)


def _pad(widths, n):
    out = np.zeros((len(widths), n), dtype=np.int64)
    out[:, : widths.shape[1]] = widths
    return out


def solve_conv_architecture(target: int, space: Family | None = None, k_nearest: int = 5) -> SolveResult:
    """All configurations of ``space`` whose parameter count equals ``target``.

    When there is no exact match, ``nearest`` holds the ``k_nearest``
    configurations with the smallest ``|count - target|``.
    """
    space = space or CnnSearchSpace()
    table = space.trunk_table()
    if len(table.params) == 0:
        raise ValueError("search space is empty")
    k = space.num_classes
    width_cols = max(space.max_hidden, 1)
    keys = table.params * (1 << 24) + table.features
    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    params, feats = table.params[first], table.features[first]
    rem = target - params - k
    members = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[members], np.arange(len(uniq) + 1))

    def expand(groups, widths):
        """Map group-level solutions back to every member trunk."""
        sizes = bounds[groups + 1] - bounds[groups]
        starts = np.repeat(bounds[groups], sizes)
        within = np.arange(sizes.sum()) - np.repeat(np.cumsum(sizes) - sizes, sizes)
        return members[starts + within], np.repeat(widths, sizes, axis=0)

    def counts_of(trunks, widths):
        total = table.params[trunks] + k
        prev = table.features[trunks]
        for j in range(widths.shape[1]):
            w = widths[:, j]
            total = total + prev * w + w  # zero padding contributes nothing
            prev = np.where(w > 0, w, prev)
        return total + prev * k

    def sort_order(trunks, widths, lead=None):
        before, after = space.key_columns()
        n_layers = table.layers[trunks] + (widths > 0).sum(axis=1) + 1
        cols = [n_layers] + list(before[trunks].T) + list(widths.T) + list(after[trunks].T)
        if lead is not None:
            cols = [lead] + cols
        return np.lexsort(cols[::-1])

    ex_t, ex_w = [], []
    for n_hidden in range(space.min_hidden, space.max_hidden + 1):
        for groups, widths in _exact_widths(rem, feats, k, n_hidden, space.max_width):
            t, w = expand(groups, _pad(widths, width_cols))
            ex_t.append(t)
            ex_w.append(w)
    trunks = np.concatenate(ex_t) if ex_t else np.zeros(0, dtype=np.int64)
    widths = np.concatenate(ex_w) if ex_w else np.zeros((0, width_cols), dtype=np.int64)
    order = sort_order(trunks, widths)
    trunks, widths = trunks[order], widths[order]
    exact = CandidateList(space, trunks, widths, counts_of(trunks, widths), target)

    nearest = []
    if not len(exact):
        best_g = np.zeros(0, dtype=np.int64)
        best_w = np.zeros((0, width_cols), dtype=np.int64)
        best_d = np.zeros(0, dtype=np.int64)
        for n_hidden in range(space.min_hidden, space.max_hidden + 1):
            for groups, w, absd in _near_widths(rem, feats, k, n_hidden, space.max_width):
                best_g = np.concatenate([best_g, groups])
                best_w = np.concatenate([best_w, _pad(w, width_cols)])
                best_d = np.concatenate([best_d, absd])
                m = min(k_nearest, len(best_d)) - 1
                keep = best_d <= np.partition(best_d, m)[m]
                best_g, best_w, best_d = best_g[keep], best_w[keep], best_d[keep]
        t, w = expand(best_g, best_w)
        # collapse clipped duplicates
        rows = np.unique(np.column_stack([t, w]), axis=0)
        t, w = rows[:, 0], rows[:, 1:]
        d = np.abs(counts_of(t, w) - target)
        order = sort_order(t, w, lead=d)[:k_nearest]
        nearest = list(CandidateList(space, t[order], w[order], counts_of(t[order], w[order]), target))
    return SolveResult(target, exact, nearest, len(table.params))
