"""Independent scalar reference for frozen values used in the C++ tests.

Evaluates the LSTM cell equations element by element with mpmath at 50
digits. Run: python3 tests/oracles/lstm_reference.py
"""
from mpmath import mp, mpf, exp, tanh, log

mp.dps = 50


def sigmoid(x):
    return 1 / (1 + exp(-x))


def cell(p, h, c, tok):
    H = len(h)
    x = p["emb"][tok]
    pre = []
    for r in range(4 * H):
        v = p["bg"][r]
        v += sum(p["wi"][r][k] * x[k] for k in range(len(x)))
        v += sum(p["wh"][r][k] * h[k] for k in range(H))
        pre.append(v)
    i = [sigmoid(pre[j]) for j in range(H)]
    f = [sigmoid(pre[H + j]) for j in range(H)]
    g = [tanh(pre[2 * H + j]) for j in range(H)]
    o = [sigmoid(pre[3 * H + j]) for j in range(H)]
    c2 = [f[j] * c[j] + i[j] * g[j] for j in range(H)]
    h2 = [o[j] * tanh(c2[j]) for j in range(H)]
    logits = [p["bo"][v] + sum(p["wo"][v][k] * h2[k] for k in range(H)) for v in range(len(p["bo"]))]
    return h2, c2, logits


def log_softmax(z):
    m = max(z)
    lse = m + log(sum(exp(v - m) for v in z))
    return [v - lse for v in z]


def M(rows):
    return [[mpf(x) for x in r] for r in rows]


def V(xs):
    return [mpf(x) for x in xs]


# Single step, V=2, E=1, H=1.
single = {
    "emb": M([["0.5"], ["-0.3"]]),
    "wi": M([["0.1"], ["0.2"], ["0.3"], ["0.4"]]),
    "wh": M([["0.5"], ["-0.6"], ["0.7"], ["-0.8"]]),
    "bg": V(["0.01", "1.0", "-0.02", "0.03"]),
    "wo": M([["1.5"], ["-2.0"]]),
    "bo": V(["0.1", "-0.1"]),
}
h, c, z = cell(single, V(["0.2"]), V(["-0.1"]), 0)
print("single_step h=%s c=%s logit0=%s logit1=%s" % (mp.nstr(h[0], 20), mp.nstr(c[0], 20),
                                                     mp.nstr(z[0], 20), mp.nstr(z[1], 20)))

# Streaming masked perplexity, V=3, E=1, H=1.
tiny = {
    "emb": M([["0.2"], ["-0.4"], ["0.9"]]),
    "wi": M([["0.3"], ["-0.2"], ["0.5"], ["0.1"]]),
    "wh": M([["-0.4"], ["0.6"], ["0.2"], ["0.3"]]),
    "bg": V(["0.0", "1.0", "0.0", "0.0"]),
    "wo": M([["1.2"], ["-0.7"], ["0.4"]]),
    "bo": V(["0.05", "-0.02", "0.1"]),
}


def stream_ppl(p, ids, thinking=2, include=False):
    h, c = [mpf(0)], [mpf(0)]
    total, n = mpf(0), 0
    for t in range(len(ids) - 1):
        h, c, z = cell(p, h, c, ids[t])
        if ids[t + 1] == thinking and not include:
            continue
        total -= log_softmax(z)[ids[t + 1]]
        n += 1
    return exp(total / n), n


# masked_perplexity primes the stream with <eos> (id 1).
ppl, n = stream_ppl(tiny, [1, 0, 1, 0])
print("tiny_stream_ppl(raw [0,1,0]) = %s counted=%d" % (mp.nstr(ppl, 20), n))
ppl, n = stream_ppl(tiny, [1, 2, 0, 2, 1, 2, 0, 2])
print("tiny_stream_ppl(injected n=1) masked = %s counted=%d" % (mp.nstr(ppl, 20), n))
ppl, n = stream_ppl(tiny, [1, 2, 0, 2, 1, 2, 0, 2], include=True)
print("tiny_stream_ppl(injected n=1) unmasked = %s counted=%d" % (mp.nstr(ppl, 20), n))
