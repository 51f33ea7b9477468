"""Pure-Python single-port propagation (fallback when the extension is absent)."""
import math

import numpy as np


class MeshEvaluator:
    """Evaluates output powers of one mesh for varying phase vectors."""

    def __init__(self, top, c, s, pidx, side, n_modes):
        self.blocks = list(zip(np.asarray(top).tolist(), np.asarray(c).tolist(),
                               np.asarray(s).tolist(), np.asarray(pidx).tolist(),
                               np.asarray(side).tolist()))
        self.n_modes = int(n_modes)

    def _run(self, phases, port):
        phases = phases.tolist() if hasattr(phases, "tolist") else list(phases)
        re = [0.0] * self.n_modes
        im = [0.0] * self.n_modes
        re[port] = 1.0
        for m, cc, ss, k, side in self.blocks:
            ar, ai, br, bi = re[m], im[m], re[m + 1], im[m + 1]
            if k >= 0 and side == 1:
                cp, sp = math.cos(phases[k]), math.sin(phases[k])
                ar, ai = ar * cp - ai * sp, ar * sp + ai * cp
            # [[c, i s], [i s, c]] acting on (a, b)
            nar, nai = cc * ar - ss * bi, cc * ai + ss * br
            nbr, nbi = cc * br - ss * ai, cc * bi + ss * ar
            if k >= 0 and side == 0:
                cp, sp = math.cos(phases[k]), math.sin(phases[k])
                nar, nai = nar * cp - nai * sp, nar * sp + nai * cp
            re[m], im[m], re[m + 1], im[m + 1] = nar, nai, nbr, nbi
        return [r * r + i * i for r, i in zip(re, im)]

    def powers(self, phases, port):
        out = np.array(self._run(phases, port))
        return out / out.sum()

    def infidelity(self, phases, port, target):
        p = self._run(phases, port)
        total = sum(p)
        acc = sum(math.sqrt(pj / total * yj) for pj, yj in zip(p, target.tolist()))
        return 1.0 - acc * acc
