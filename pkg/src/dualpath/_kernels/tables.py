"""Flat term-table encoding of log-barrier functions.

A barrier over a block is a sum of primitive terms, each acting on one or
two coordinates or on an affine form over the whole block.  Keeping the
terms in flat int/float arrays makes the compiled and the pure-Python
evaluation backends interchangeable and branch-light.
"""
from __future__ import annotations

import numpy as np

# term kinds
COORD_LO = 0   # -ln(x[ia] - p0)
COORD_HI = 1   # -ln(p0 - x[ia])
HALFSPACE = 2  # -ln(p0 - a^T x), a dense over the block
LOG_EPI = 3    # v = x[ia], s = x[ib]: -ln(v) - ln(ln(v) + s)
ENT_EPI = 4    # v = x[ia], s = x[ib]: -ln(v) - ln(s - v*ln(v))
QUAD_EPI = 5   # x[ia:ia+k], s = x[ib]: -ln(x^T Q x + q^T x + r - s)

_TERM_NU = {COORD_LO: 1.0, COORD_HI: 1.0, HALFSPACE: 1.0,
            LOG_EPI: 2.0, ENT_EPI: 2.0, QUAD_EPI: 1.0}


class TermTable:
    """Immutable flat description of a barrier as a list of primitive terms."""

    __slots__ = ("dim", "kind", "ia", "ib", "po", "params", "nu")

    def __init__(self, dim, kind, ia, ib, po, params, nu):
        self.dim = int(dim)
        self.kind = np.ascontiguousarray(kind, dtype=np.int32)
        self.ia = np.ascontiguousarray(ia, dtype=np.int32)
        self.ib = np.ascontiguousarray(ib, dtype=np.int32)
        self.po = np.ascontiguousarray(po, dtype=np.int32)
        self.params = np.ascontiguousarray(params, dtype=np.float64)
        self.nu = float(nu)

    @property
    def n_terms(self):
        return self.kind.shape[0]

    @classmethod
    def build(cls, dim, terms):
        """Build a table from a list of term tuples.

        Accepted tuples:
          ("coord_lo", i, l)            -> -ln(x[i] - l)
          ("coord_hi", i, u)            -> -ln(u - x[i])
          ("halfspace", a, d)           -> -ln(d - a^T x), len(a) == dim
          ("log_epi", iv, is_)          -> -ln v - ln(ln v + s)
          ("ent_epi", iv, is_)          -> -ln v - ln(s - v ln v)
          ("quad_epi", i0, k, is_, Q, q, r) -> -ln(phi(x[i0:i0+k]) - s)
        """
        kind, ia, ib, po = [], [], [], []
        params = []
        nu = 0.0
        for term in terms:
            tag = term[0]
            off = len(params)
            if tag == "coord_lo":
                _, i, l = term
                kind.append(COORD_LO); ia.append(i); ib.append(0); po.append(off)
                params.append(float(l))
            elif tag == "coord_hi":
                _, i, u = term
                kind.append(COORD_HI); ia.append(i); ib.append(0); po.append(off)
                params.append(float(u))
            elif tag == "halfspace":
                _, a, d = term
                a = np.asarray(a, dtype=float)
                if a.shape != (dim,):
                    raise ValueError("halfspace normal must have the block dimension")
                kind.append(HALFSPACE); ia.append(0); ib.append(0); po.append(off)
                params.append(float(d)); params.extend(a.tolist())
            elif tag == "log_epi":
                _, iv, is_ = term
                kind.append(LOG_EPI); ia.append(iv); ib.append(is_); po.append(off)
            elif tag == "ent_epi":
                _, iv, is_ = term
                kind.append(ENT_EPI); ia.append(iv); ib.append(is_); po.append(off)
            elif tag == "quad_epi":
                _, i0, k, is_, Q, q, r = term
                Q = np.asarray(Q, dtype=float).reshape(k, k)
                q = np.asarray(q, dtype=float).reshape(k)
                kind.append(QUAD_EPI); ia.append(i0); ib.append(is_); po.append(off)
                params.append(float(k)); params.append(float(r))
                params.extend(q.tolist()); params.extend(Q.ravel().tolist())
            else:
                raise ValueError(f"unknown term tag {tag!r}")
            nu += _TERM_NU[kind[-1]]
        return cls(dim, kind, ia, ib, po, params, nu)

    def shifted(self, offset, new_dim):
        """Re-index the table into a larger block starting at `offset`."""
        ia = self.ia + np.int32(offset)
        ib = self.ib + np.int32(offset)
        params = self.params.copy()
        kind = self.kind.copy()
        po = self.po.copy()
        # halfspace normals are dense over the old dim; re-pack them
        terms_params = []
        new_po = []
        for j in range(self.n_terms):
            off = len(terms_params)
            new_po.append(off)
            k = kind[j]
            p = po[j]
            if k == HALFSPACE:
                d = params[p]
                a_old = params[p + 1:p + 1 + self.dim]
                a_new = np.zeros(new_dim)
                a_new[offset:offset + self.dim] = a_old
                terms_params.append(d); terms_params.extend(a_new.tolist())
            elif k == QUAD_EPI:
                kq = int(params[p])
                terms_params.extend(params[p:p + 2 + kq + kq * kq].tolist())
            elif k in (COORD_LO, COORD_HI):
                terms_params.append(params[p])
            # epi kinds carry no params
        return TermTable(new_dim, kind, ia, ib, new_po, terms_params, self.nu)

    @staticmethod
    def concat(dim, tables_with_offsets):
        """Merge (table, offset) pairs into one table over `dim` coordinates."""
        shifted = [t.shifted(off, dim) for t, off in tables_with_offsets]
        kind = np.concatenate([t.kind for t in shifted])
        ia = np.concatenate([t.ia for t in shifted])
        ib = np.concatenate([t.ib for t in shifted])
        po = []
        params = []
        for t in shifted:
            base = len(params)
            po.extend((t.po + base).tolist())
            params.extend(t.params.tolist())
        nu = sum(t.nu for t in shifted)
        return TermTable(dim, kind, ia, ib, po, params, nu)
