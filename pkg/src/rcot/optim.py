"""RMSProp over one or more parameter stores."""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)


class RMSProp:
    """``v <- decay v + (1 - decay) g^2``; ``p <- p - lr g / (sqrt(v) + eps)``.

    ``clip`` bounds the global gradient norm across all stores; each
    activation is logged.
    """

    def __init__(self, stores, lr, decay=0.9, eps=1e-8, clip=None):
        self.stores = list(stores)
        self.lr = float(lr)
        self.decay = float(decay)
        self.eps = float(eps)
        self.clip = clip
        self.square_avg = [{k: np.zeros_like(v) for k, v in s.values.items()} for s in self.stores]
        self.clip_events = 0

    def zero_grad(self):
        for s in self.stores:
            s.zero_grad()

    def grad_norm(self):
        return float(np.sqrt(sum(np.sum(g * g) for s in self.stores for g in s.grads.values())))

    def step(self):
        scale = 1.0
        if self.clip is not None:
            norm = self.grad_norm()
            if norm > self.clip:
                scale = self.clip / norm
                self.clip_events += 1
                log.info("gradient norm %.3e clipped to %.3e", norm, self.clip)
        if self.lr == 0.0:
            return
        for store, avg in zip(self.stores, self.square_avg):
            for name, p in store.values.items():
                g = store.grads[name] * scale
                v = avg[name]
                v *= self.decay
                v += (1.0 - self.decay) * g * g
                p -= self.lr * g / (np.sqrt(v) + self.eps)

    def state_dict(self):
        return [{k: v.copy() for k, v in avg.items()} for avg in self.square_avg]
