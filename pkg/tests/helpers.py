"""Shared test oracles, kept independent of the package implementations."""

import numpy as np

N = 6
DIM = 64

H_GATE = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
EYE2 = np.eye(2, dtype=np.complex128)


def ry_gate(angle):
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rz_gate(angle):
    return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]], dtype=np.complex128)


def phase_gate(phi):
    return np.array([[1, 0], [0, np.exp(1j * phi)]], dtype=np.complex128)


def single_qubit_unitary(gate2, qubit):
    """Embed a 2x2 gate on one qubit (qubit 0 = least significant bit)."""
    high = np.eye(2 ** (N - 1 - qubit), dtype=np.complex128)
    low = np.eye(2 ** qubit, dtype=np.complex128)
    return np.kron(high, np.kron(gate2, low))


def cx_unitary(control, target):
    mat = np.zeros((DIM, DIM), dtype=np.complex128)
    for basis in range(DIM):
        if (basis >> control) & 1:
            mat[basis ^ (1 << target), basis] = 1.0
        else:
            mat[basis, basis] = 1.0
    return mat


def dense_zz_feature_map(x, reps=2):
    """64x64 unitary of the data-encoding circuit, built by matrix products."""
    x = np.clip(np.asarray(x, dtype=np.float64), -np.pi, np.pi)
    u = np.eye(DIM, dtype=np.complex128)
    for _ in range(reps):
        for q in range(N):
            u = single_qubit_unitary(H_GATE, q) @ u
        for q in range(N):
            u = single_qubit_unitary(phase_gate(2.0 * x[q]), q) @ u
        for q in range(N - 1):
            cx = cx_unitary(q, q + 1)
            p = single_qubit_unitary(phase_gate(2.0 * (np.pi - x[q]) * (np.pi - x[q + 1])), q + 1)
            u = cx @ u
            u = p @ u
            u = cx @ u
    return u


def dense_efficient_su2(theta, reps=2):
    theta = np.asarray(theta, dtype=np.float64)
    u = np.eye(DIM, dtype=np.complex128)
    pos = 0
    for rep in range(reps + 1):
        for q in range(N):
            u = single_qubit_unitary(ry_gate(theta[pos]), q) @ u
            pos += 1
        for q in range(N):
            u = single_qubit_unitary(rz_gate(theta[pos]), q) @ u
            pos += 1
        if rep < reps:
            for q in range(N - 1):
                u = cx_unitary(q, q + 1) @ u
    return u


def dense_vqc_state(x, theta):
    e0 = np.zeros(DIM, dtype=np.complex128)
    e0[0] = 1.0
    return dense_efficient_su2(theta) @ (dense_zz_feature_map(x) @ e0)


def dense_z_expectations(state):
    probs = np.abs(state) ** 2
    out = np.empty(N)
    for i in range(N):
        signs = 1.0 - 2.0 * ((np.arange(DIM) >> i) & 1)
        out[i] = float(probs @ signs)
    return out


def confusion_metrics_oracle(predictions, labels):
    """Brute-force metric computation by explicit pair counting."""
    tp = fp = fn = tn = 0
    for p, l in zip(predictions, labels):
        if p == 1 and l == 1:
            tp += 1
        elif p == 1 and l == 0:
            fp += 1
        elif p == 0 and l == 1:
            fn += 1
        else:
            tn += 1
    n = tp + fp + fn + tn
    acc = (tp + tn) / n
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return {"accuracy": acc, "precision": prec, "recall": rec, "f1": f1}


def central_difference(fn, x, i, h):
    """Two-sided difference quotient of fn along coordinate i."""
    x = np.array(x, dtype=np.float64)
    x[i] += h
    up = fn(x)
    x[i] -= 2 * h
    down = fn(x)
    return (up - down) / (2 * h)
