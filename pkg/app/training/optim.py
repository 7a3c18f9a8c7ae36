import numpy as np


class Adam:
    """Adam over the trainable parameters it is given; parameters without a gradient are skipped"""

    def __init__(self, parameters, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError(f"Learning rate must be positive, got {lr}")
        self.parameters = [p for p in parameters if p.trainable]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.parameters}
        self.v = {p.name: np.zeros_like(p.data) for p in self.parameters}

    def zero_grad(self):
        for p in self.parameters:
            p.tensor.grad = None

    def step(self):
        self.steps += 1
        c1 = 1.0 - self.beta1 ** self.steps
        c2 = 1.0 - self.beta2 ** self.steps
        for p in self.parameters:
            g = p.tensor.grad
            if g is None:
                continue
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.tensor.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
