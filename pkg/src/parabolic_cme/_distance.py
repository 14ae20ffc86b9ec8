"""Branch-and-bound parabolic distances from boxes to the samples of a graph.

A min/max pyramid over the sampled graph values gives, for every index block,
a bounding box in space-time.  The parabolic distance between two axis-aligned
boxes separates into a spatial Euclidean gap and a temporal gap, so block
bounds are cheap lower bounds; a representative sample of each block gives an
upper bound.  Queries are processed in vectorised batches, one pyramid level
at a time.
"""

import itertools

import numpy as np

_BATCH = 2048


def box_gap(lo_a, hi_a, lo_b, hi_b):
    """Parabolic distance between axis-aligned boxes (last axis = coordinates, first = time)."""
    gap = np.maximum(0.0, np.maximum(lo_a - hi_b, lo_b - hi_a))
    return np.sqrt(np.sum(gap[..., 1:] ** 2, axis=-1)) + np.sqrt(gap[..., 0])


class SampleIndex:
    """Pyramid over ``values`` sampled on the tensor grid ``axes`` (time first).

    ``values[i_0, ..., i_{m-1}]`` is the graph height over the base point
    ``(axes[0][i_0], ..., axes[m-1][i_{m-1}])``; the graph point is the base
    point with the height appended.
    """

    def __init__(self, axes, values):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        self.shape = self.values.shape
        self.m = self.values.ndim
        self.fmin = [self.values]
        self.fmax = [self.values]
        while max(self.fmin[-1].shape) > 4:
            self.fmin.append(self._coarsen(self.fmin[-1], np.minimum, np.inf))
            self.fmax.append(self._coarsen(self.fmax[-1], np.maximum, -np.inf))
        self.offsets = np.array(list(itertools.product((0, 1), repeat=self.m)), dtype=np.int64)

    @staticmethod
    def _coarsen(a, op, fill):
        pad = [(0, s % 2) for s in a.shape]
        a = np.pad(a, pad, constant_values=fill)
        out = a
        for ax in range(a.ndim):
            sl0 = [slice(None)] * a.ndim
            sl1 = [slice(None)] * a.ndim
            sl0[ax] = slice(0, None, 2)
            sl1[ax] = slice(1, None, 2)
            out = op(out[tuple(sl0)], out[tuple(sl1)])
        return out

    def _coords(self, idx):
        return np.stack([self.axes[d][idx[:, d]] for d in range(self.m)], axis=1)

    def box_distance(self, lo, hi, index_lo=None, index_hi=None, cap=None):
        """Distance from each query box ``[lo[q], hi[q]]`` to the sample set.

        ``index_lo``/``index_hi`` (half-open, per query) restrict the samples
        considered.  Queries whose distance exceeds ``cap`` may return any
        value above ``cap``.  Returns ``inf`` for an empty restriction.
        """
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        M = lo.shape[0]
        shape = np.array(self.shape, dtype=np.int64)
        if index_lo is None:
            index_lo = np.zeros((M, self.m), dtype=np.int64)
            index_hi = np.broadcast_to(shape, (M, self.m))
        index_lo = np.asarray(index_lo, dtype=np.int64).reshape(M, self.m)
        index_hi = np.asarray(index_hi, dtype=np.int64).reshape(M, self.m)
        out = np.empty(M)
        for s in range(0, M, _BATCH):
            e = min(M, s + _BATCH)
            out[s:e] = self._batch(lo[s:e], hi[s:e], index_lo[s:e], index_hi[s:e], cap)
        return out

    def _batch(self, lo, hi, ilo, ihi, cap):
        M = lo.shape[0]
        top = len(self.fmin) - 1
        tshape = self.fmin[top].shape
        blocks = np.array(list(np.ndindex(*tshape)), dtype=np.int64)
        qid = np.repeat(np.arange(M), len(blocks))
        bidx = np.tile(blocks, (M, 1))
        ub = np.full(M, np.inf if cap is None else float(cap) * (1 + 1e-9) + 1e-300)
        best = np.full(M, np.inf)
        for level in range(top, -1, -1):
            if qid.size == 0:
                break
            start = bidx << level
            stop = np.minimum((bidx + 1) << level, np.array(self.shape))
            s_eff = np.maximum(start, ilo[qid])
            e_eff = np.minimum(stop, ihi[qid])
            ok = np.all(e_eff > s_eff, axis=1)
            qid, bidx, s_eff, e_eff = qid[ok], bidx[ok], s_eff[ok], e_eff[ok]
            key = tuple(bidx.T)
            fmn = self.fmin[level][key]
            fmx = self.fmax[level][key]
            blo = np.column_stack([self._coords(s_eff), fmn])
            bhi = np.column_stack([self._coords(e_eff - 1), fmx])
            lb = box_gap(lo[qid], hi[qid], blo, bhi)
            rep = np.column_stack([self._coords(s_eff), self.values[tuple(s_eff.T)]])
            rep_d = box_gap(lo[qid], hi[qid], rep, rep)
            np.minimum.at(best, qid, rep_d)
            np.minimum.at(ub, qid, rep_d)
            if level == 0:
                break
            tol = 1e-12 * (1.0 + ub[qid])
            keep = lb < ub[qid] - tol
            qid, bidx = qid[keep], bidx[keep]
            if qid.size == 0:
                break
            nchild = len(self.offsets)
            qid = np.repeat(qid, nchild)
            bidx = (np.repeat(bidx, nchild, axis=0) << 1) + np.tile(self.offsets, (len(bidx), 1))
            inside = np.all(bidx < np.array(self.fmin[level - 1].shape), axis=1)
            qid, bidx = qid[inside], bidx[inside]
        return best
