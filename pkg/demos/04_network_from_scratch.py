"""
A small Q-network in plain numpy
================================

The agent's network maps the 8 observation values to one Q-value per action
through two ReLU layers of 32 and 16 units.  Here we check backpropagation
against central finite differences and take a few Adam steps on a toy
regression problem.
"""

import numpy as np

from signalbench.neural import AdamState, DenseNet, adam_update, backward, forward, huber

rng = np.random.default_rng(0)
net = DenseNet.init((8, 32, 16, 2), rng)
print("layer sizes", net.sizes, "parameters", net.n_params)

x = rng.normal(size=(1, 8))
upstream = rng.normal(size=(1, 2))
_, cache = forward(net, x, return_cache=True)
grads = backward(net, x, upstream, cache)

# finite differences on the three first-layer weights with the largest gradient
# (units that are off for this input have exactly zero gradient)
w = net.params()[0]
h = 1e-5
picks = np.argsort(np.abs(grads[0]), axis=None)[-3:]
for idx in zip(*(i.tolist() for i in np.unravel_index(picks, w.shape))):
    old = w[idx]
    w[idx] = old + h
    plus = np.sum(upstream * forward(net, x))
    w[idx] = old - h
    minus = np.sum(upstream * forward(net, x))
    w[idx] = old
    print(f"dW{idx}: analytic {grads[0][idx]: .8f}  numeric {(plus - minus) / (2 * h): .8f}")

# %%
# Fit y = sum(x) on random inputs, first output only, with a Huber loss.
adam = AdamState(net.params(), learning_rate=1e-3)
X = rng.normal(size=(256, 8))
y = X.sum(axis=1)
for epoch in range(301):
    out, cache = forward(net, X, return_cache=True)
    loss, dq = huber(out[:, 0] - y, delta=1.0)
    grad_out = np.zeros_like(out)
    grad_out[:, 0] = dq / len(X)
    adam_update(net.params(), backward(net, X, grad_out, cache), adam)
    if epoch % 100 == 0:
        print(f"epoch {epoch:3d}  mean huber loss {loss.mean():.4f}")
