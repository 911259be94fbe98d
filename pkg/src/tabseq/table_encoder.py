"""Multi-dimensional GRU table encoder.

Each cell (i, j) of layer l mixes its input X[i, j] with three predecessor
states: the same cell in layer l-1, the row neighbour and the column
neighbour.  Which neighbours count as predecessors depends on the
direction; the four directions are the sign combinations of row and column
traversal.

Two schedules compute the same table:

* ``naive`` visits cells one by one in traversal order.
* ``wavefront`` evaluates a whole antidiagonal per step.  Cells on one
  antidiagonal never depend on each other, so a step is a batch of
  independent cell updates expressed as a handful of array operations.
  Mixed-sign directions are handled by flipping the grid so that every
  direction becomes row+col+ before the sweep.
"""

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, concat, no_grad, parameter, softmax, stack, zeros
from .errors import AlignmentError, ConfigError
from .nn import Linear, Module, glorot


@dataclass(frozen=True)
class Direction:
    name: str
    row_sign: int
    col_sign: int


DIRECTIONS = {
    "a": Direction("a", +1, +1),
    "b": Direction("b", +1, -1),
    "c": Direction("c", -1, -1),
    "d": Direction("d", -1, +1),
}

DIRECTION_SETS = {
    "uni": ("a",),
    "bi-ac": ("a", "c"),
    "bi-bd": ("b", "d"),
    "quad": ("a", "b", "c", "d"),
}

SCHEDULES = ("naive", "wavefront")


class MdGruCell(Module):
    """GRU cell with three predecessors and a lambda gate.

    Gate weights act on [X; T_layer; T_row; T_col]; their columns are laid out
    as (reset, update, lambda_0, lambda_1, lambda_2), each ``hidden`` wide.
    """

    def __init__(self, d_in, hidden, rng):
        self.d_in = d_in
        self.hidden = hidden
        self.w_gates = parameter(glorot(rng, d_in + 3 * hidden, 5 * hidden))
        self.b_gates = parameter(np.zeros(5 * hidden))
        self.w_x = parameter(glorot(rng, d_in, hidden))
        self.w_p = parameter(glorot(rng, 3 * hidden, hidden))
        self.b_h = parameter(np.zeros(hidden))


def lambda_gates(cell, x, t_layer, t_row, t_col):
    """Softmax-normalised predecessor weights, shape [..., 3, hidden]."""
    h = cell.hidden
    g = concat([x, t_layer, t_row, t_col], axis=-1) @ cell.w_gates + cell.b_gates
    lam = g[..., 2 * h :]
    return softmax(lam.reshape(*lam.shape[:-1], 3, h), axis=-2)


def md_gru_step(cell, x, t_layer, t_row, t_col):
    """One cell update.  All arguments share leading dims; missing predecessors are zeros."""
    h = cell.hidden
    t_prev = concat([t_layer, t_row, t_col], axis=-1)
    g = concat([x, t_prev], axis=-1) @ cell.w_gates + cell.b_gates
    r = g[..., :h].sigmoid()
    z = g[..., h : 2 * h].sigmoid()
    lam = g[..., 2 * h :]
    lam = softmax(lam.reshape(*lam.shape[:-1], 3, h), axis=-2)
    cand = (x @ cell.w_x + r * (t_prev @ cell.w_p) + cell.b_h).tanh()
    mixed = lam[..., 0, :] * t_layer + lam[..., 1, :] * t_row + lam[..., 2, :] * t_col
    return z * cand + (1.0 - z) * mixed


def wavefront_groups(n, direction):
    """Cells (0-based) in evaluation order, grouped by antidiagonal of the traversal."""
    d = DIRECTIONS[direction] if isinstance(direction, str) else direction
    groups = []
    for s in range(2 * n - 1):
        cells = []
        for i in range(max(0, s - n + 1), min(s, n - 1) + 1):
            j = s - i
            cells.append((i if d.row_sign > 0 else n - 1 - i, j if d.col_sign > 0 else n - 1 - j))
        groups.append(sorted(cells))
    return groups


def run_direction(cell, x, t_layer, direction, schedule="wavefront", mask=None,
                  use_layer=True, use_row=True, use_col=True):
    """Sweep one direction over a batch of tables.

    x: [B, N, N, d_in]; t_layer: [B, N, N, hidden] or None (zeros); mask: [B, N, N]
    marks real cells.  Padded cells are forced to zero so they act exactly like
    out-of-range neighbours.  Returns [B, N, N, hidden].
    """
    if schedule not in SCHEDULES:
        raise ConfigError(f"unknown schedule {schedule!r}; expected one of {SCHEDULES}")
    d = DIRECTIONS[direction] if isinstance(direction, str) else direction
    b, n = x.shape[0], x.shape[1]
    if t_layer is None or not use_layer:
        t_layer = zeros((b, n, n, cell.hidden))
    if mask is None:
        mask = np.ones((b, n, n))
    if schedule == "naive":
        return _run_naive(cell, x, t_layer, d, mask, use_row, use_col)

    flips = tuple(ax for ax, sign in ((1, d.row_sign), (2, d.col_sign)) if sign < 0)
    if flips:
        x, t_layer = x.flip(flips), t_layer.flip(flips)
        mask = np.flip(mask, flips)
    out = _run_wavefront(cell, x, t_layer, mask, use_row, use_col)
    return out.flip(flips) if flips else out


def _run_naive(cell, x, t_layer, d, mask, use_row, use_col):
    b, n = x.shape[0], x.shape[1]
    zero = zeros((b, cell.hidden))
    rows = range(n) if d.row_sign > 0 else range(n - 1, -1, -1)
    cols = range(n) if d.col_sign > 0 else range(n - 1, -1, -1)
    state = {}
    for i in rows:
        for j in cols:
            t_row = state.get((i - d.row_sign, j), zero) if use_row else zero
            t_col = state.get((i, j - d.col_sign), zero) if use_col else zero
            new = md_gru_step(cell, x[:, i, j], t_layer[:, i, j], t_row, t_col)
            state[(i, j)] = new * Tensor(mask[:, i, j, None])
    cells = [state[(i, j)] for i in range(n) for j in range(n)]
    return stack(cells, axis=1).reshape(b, n, n, cell.hidden)


def _run_wavefront(cell, x, t_layer, mask, use_row, use_col):
    b, n, h, d_in = x.shape[0], x.shape[1], cell.hidden, cell.d_in
    w = cell.w_gates
    # everything that does not depend on same-layer neighbours is computed once
    base = x @ w[:d_in] + t_layer @ w[d_in : d_in + h] + cell.b_gates
    cand_x = x @ cell.w_x + cell.b_h
    p_layer = t_layer @ cell.w_p[:h]
    w_nb = concat([w[d_in + h :], cell.w_p[h:]], axis=-1)  # [2h, 6h]

    diagonals = []
    order = []
    prev = None
    prev_lo = 0
    for s in range(2 * n - 1):
        lo, hi = max(0, s - n + 1), min(s, n - 1)
        ii = np.arange(lo, hi + 1)
        jj = s - ii
        order.extend((ii * n + jj).tolist())
        if prev is None:
            t_row = t_col = zeros((b, len(ii), h))
        else:
            plen = prev.shape[1]
            ext = concat([prev, zeros((b, 1, h))], axis=1)
            # (i-1, j) and (i, j-1) both sit on the previous antidiagonal
            row_pos = ii - 1 - prev_lo
            col_pos = ii - prev_lo
            row_pos = np.where((ii - 1 >= 0) & (row_pos >= 0) & (row_pos < plen), row_pos, plen)
            col_pos = np.where((jj - 1 >= 0) & (col_pos >= 0) & (col_pos < plen), col_pos, plen)
            if not use_row:
                row_pos = np.full_like(row_pos, plen)
            if not use_col:
                col_pos = np.full_like(col_pos, plen)
            t_row, t_col = ext[:, row_pos], ext[:, col_pos]

        nb = concat([t_row, t_col], axis=-1) @ w_nb
        g = base[:, ii, jj] + nb[..., : 5 * h]
        r = g[..., :h].sigmoid()
        z = g[..., h : 2 * h].sigmoid()
        lam = softmax(g[..., 2 * h :].reshape(b, len(ii), 3, h), axis=-2)
        cand = (cand_x[:, ii, jj] + r * (p_layer[:, ii, jj] + nb[..., 5 * h :])).tanh()
        mixed = lam[:, :, 0] * t_layer[:, ii, jj] + lam[:, :, 1] * t_row + lam[:, :, 2] * t_col
        new = (z * cand + (1.0 - z) * mixed) * Tensor(mask[:, ii, jj, None])
        diagonals.append(new)
        prev, prev_lo = new, lo

    flat = concat(diagonals, axis=1)
    inverse = np.argsort(np.asarray(order))
    return flat[:, inverse].reshape(b, n, n, h)


class TableEncoderLayer(Module):
    """Builds X_l from S_{l-1} and runs one MD-GRU per direction."""

    def __init__(self, hidden, rng, directions="bi-ac", attn_dim=0):
        if directions not in DIRECTION_SETS:
            raise ConfigError(f"unknown direction set {directions!r}; expected one of {sorted(DIRECTION_SETS)}")
        names = DIRECTION_SETS[directions]
        if hidden % len(names):
            raise ConfigError(f"hidden size {hidden} is not divisible by {len(names)} directions")
        self.hidden = hidden
        self.attn_dim = attn_dim
        self.direction_names = names
        self.input_proj = Linear(2 * hidden + attn_dim, hidden, rng)
        self.cells = [MdGruCell(hidden, hidden // len(names), rng) for _ in names]

    @property
    def dir_hidden(self):
        return self.hidden // len(self.direction_names)

    def build_input_table(self, s_prev, feat=None):
        return build_input_table(self.input_proj, s_prev, feat, self.attn_dim)

    def __call__(self, s_prev, t_prev_dirs=None, feat=None, mask=None, schedule="wavefront",
                 use_layer=True, use_row=True, use_col=True):
        """Returns (T_l [B,N,N,H], per-direction states for the next layer)."""
        x = self.build_input_table(s_prev, feat)
        outs = []
        for k, (name, cell) in enumerate(zip(self.direction_names, self.cells)):
            t_layer = None if t_prev_dirs is None else t_prev_dirs[k]
            outs.append(run_direction(cell, x, t_layer, name, schedule, mask, use_layer, use_row, use_col))
        table = outs[0] if len(outs) == 1 else concat(outs, axis=-1)
        return table, outs


def build_input_table(proj, s_prev, feat=None, attn_dim=0):
    """X[i, j] = ReLU(Linear([S_i; S_j; feat_ij])) for all ordered pairs.

    The linear map over the concatenation is split into its three blocks so the
    N x N x 2H concatenation is never materialised.
    """
    hidden = s_prev.shape[-1]
    w = proj.weight
    left = s_prev @ w[:hidden]
    right = s_prev @ w[hidden : 2 * hidden]
    b, n = s_prev.shape[0], s_prev.shape[1]
    x = left.reshape(b, n, 1, -1) + right.reshape(b, 1, n, -1) + proj.bias
    if attn_dim:
        if feat is None:
            raise ConfigError(f"layer expects attention features of width {attn_dim}")
        if feat.shape[1] != n or feat.shape[2] != n:
            raise AlignmentError(f"attention feature table {feat.shape[1:3]} does not match sentence length {n}")
        if feat.shape[-1] != attn_dim:
            raise ConfigError(f"attention feature width {feat.shape[-1]} != configured {attn_dim}")
        x = x + feat @ w[2 * hidden :]
    elif feat is not None:
        raise ConfigError("attention features given but the layer has attn_dim=0")
    return x.relu()


def encode_table(layer, s_prev, t_prev_dirs=None, feat=None, mask=None, schedule="wavefront"):
    """Functional alias for ``TableEncoderLayer.__call__``."""
    return layer(s_prev, t_prev_dirs, feat, mask, schedule)


def inference_table(layer, s_prev, t_prev_dirs=None, feat=None, mask=None, schedule="wavefront"):
    with no_grad():
        return layer(s_prev, t_prev_dirs, feat, mask, schedule)
