"""Adam with bias-corrected first and second moments."""

import numpy as np


class Adam:
    """Operates on a list of arrays; step() returns updated copies.

    m_t = b1*m + (1-b1)*g, v_t = b2*v + (1-b2)*g^2, bias-corrected by
    1/(1-b^t), update -lr * m_hat / (sqrt(v_hat) + eps).
    """

    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        if len(params) != len(self.m):
            raise ValueError("parameter count changed between steps")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out
