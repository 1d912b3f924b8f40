"""Writes manipulator.json: static output feedback H-infinity design for a
flexible robot joint, as a BMI in (X, gamma) and the gain F = [F1, F2].

    minimize gamma
    s.t. X > 0, gamma > 0,
         -[[A_F'X + X A_F, X B F D21, C1'],
           [*,             -gamma,    D11],
           [*,             *,         -gamma]] > 0,   A_F = A + B F C

Run from this directory: python3 gen_manipulator.py
"""
import json

import sympy as sp

M, Lt, beta, Im, Ison, c = sp.symbols("M L_t beta I_m I_son c")
NOMINAL = {"M": -260.6, "L_t": 0.6, "beta": 0.4, "I_m": 0.001, "I_son": 400.0, "c": 130.0}
SPREAD = 0.15

A = sp.Matrix([
    [0, 1, 0, 0],
    [0, 0, c / (M**2 * Im), 0],
    [0, 0, 0, 1],
    [0, -beta / Ison, -c / (M**2 * Im) - c / Ison, -beta / Ison],
])
B = sp.Matrix([0, Lt / (M * Im), 0, -Lt / (M * Im)])
C = sp.Matrix([[0, M, 0, 0], [1, 0, 1, 0]])
C1 = sp.Matrix([[1, 0, 1, 0]])
D11 = sp.Integer(1)
D21 = sp.Matrix([1, 0])

X = sp.Matrix(4, 4, lambda i, j: sp.Symbol(f"X_{min(i, j)}_{max(i, j)}"))
gamma = sp.Symbol("gamma")
F = sp.Matrix([[sp.Symbol("F1"), sp.Symbol("F2")]])

AF = A + B * F * C
top = AF.T * X + X * AF
col_w = X * B * F * D21
H = sp.zeros(6, 6)
H[:4, :4] = top
H[:4, 4] = col_w
H[:4, 5] = C1.T
H[4, 4] = -gamma
H[4, 5] = D11
H[5, 5] = -gamma
for i in range(6):
    for j in range(i):
        H[i, j] = H[j, i]


def text(e):
    s = sp.sstr(sp.expand(e), order="lex")
    assert "**(" not in s, s
    return s.replace("**", "^")


def entries(m):
    out = {}
    for i in range(m.rows):
        for j in range(i, m.cols):
            e = sp.expand(m[i, j])
            if e != 0:
                out[f"{i},{j}"] = text(e)
    return out


def box(name, nominal):
    a, b = nominal * (1 - SPREAD), nominal * (1 + SPREAD)
    return {"name": name, "nominal": nominal, "lower": min(a, b), "upper": max(a, b)}


problem = {
    "name": "robot manipulator joint, static output feedback H-infinity",
    "description": "minimize gamma over X = X' (4x4), gamma and F (1x2); all six plant parameters uncertain by 15%",
    "parameters": [box(k, v) for k, v in NOMINAL.items()],
    "variables": [
        {"name": "X", "kind": "symmetric", "dim": 4, "group": "x"},
        {"name": "gamma", "kind": "scalar", "group": "x"},
        {"name": "F1", "kind": "scalar", "group": "y"},
        {"name": "F2", "kind": "scalar", "group": "y"},
    ],
    "objective": {"gamma": 1.0},
    "blocks": [
        {"name": "hinf", "dim": 6, "strictness": "strict", "entries": entries(-H)},
        {"name": "lyapunov", "dim": 4, "strictness": "strict", "entries": entries(X)},
        {"name": "gamma_pos", "dim": 1, "strictness": "strict", "entries": {"0,0": "gamma"}},
    ],
}

with open("manipulator.json", "w") as f:
    json.dump(problem, f, indent=2)
    f.write("\n")
