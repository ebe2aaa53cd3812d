#!/usr/bin/env python3
"""Straight-line Stackelberg enumeration for the 14 built-in games.

Shares no code with the Rust solver. Writes one tab-separated line per game:
name, leader policy, follower policy, leader value, follower value.

Observations (leader-action-major): joint memory [Initial, CC, CD, DC, DD];
other-only memory [Initial, OtherC, OtherD]; single shot [Initial].
Policy index bit i is 1 when the policy defects at observation i.
Follower ties go to the leader, then the lowest index; leader ties to the lowest index.

usage: enumerate_golden.py [output-path]
"""
import itertools
import sys

C, D = 0, 1

# (name, leader payoff, follower payoff, horizon, memory); rows = leader action.
GAMES = [
    ("prisoners dilemma", [[-1, -3], [0, -2]], [[-1, 0], [-3, -2]], 10, "joint"),
    ("stag hunt", [[0, -3], [-1, -2]], [[0, -1], [-3, -2]], 10, "joint"),
    ("assurance", [[0, -3], [-2, -1]], [[0, -2], [-3, -1]], 10, "joint"),
    ("coordination", [[0, -2], [-3, -1]], [[0, -3], [-2, -1]], 10, "joint"),
    ("mixedharmony", [[0, -1], [-3, -2]], [[0, -3], [-1, -2]], 10, "joint"),
    ("harmony", [[0, -1], [-2, -3]], [[0, -2], [-1, -3]], 10, "joint"),
    ("noconflict", [[0, -2], [-1, -3]], [[0, -1], [-2, -3]], 10, "joint"),
    ("deadlock", [[-2, -3], [0, -1]], [[-2, 0], [-3, -1]], 10, "joint"),
    ("prisoners delight", [[-3, -2], [0, -1]], [[-3, 0], [-2, -1]], 10, "joint"),
    ("hero", [[-3, -1], [0, -2]], [[-3, 0], [-1, -2]], 10, "joint"),
    ("battle", [[-2, -1], [0, -3]], [[-2, 0], [-1, -3]], 10, "joint"),
    ("chicken", [[-1, -2], [0, -3]], [[-1, 0], [-2, -3]], 10, "joint"),
    ("battle of the sexes", [[2, 0], [0, 1]], [[1, 0], [0, 2]], 1, "single"),
    ("prisoners dilemma modified", [[0, -2], [-1, -3]], [[-1, 0], [-3, -2]], 10, "other"),
]

N_OBS = {"joint": 5, "other": 3, "single": 1}


def obs(memory, prev, role):
    if prev is None or memory == "single":
        return 0
    a_leader, a_follower = prev
    if memory == "joint":
        return 1 + 2 * a_leader + a_follower
    other = a_follower if role == "leader" else a_leader
    return 1 + other


def rollout(game, leader, follower):
    _, pl, pf, horizon, memory = game
    prev = None
    vl = vf = 0
    for _ in range(horizon):
        al = leader[obs(memory, prev, "leader")]
        af = follower[obs(memory, prev, "follower")]
        vl += pl[al][af]
        vf += pf[al][af]
        prev = (al, af)
    return vl, vf


def policies(n):
    # index order: bit i = action at observation i
    for idx in range(2 ** n):
        yield [(idx >> i) & 1 for i in range(n)]


def solve(game):
    n = N_OBS[game[4]]
    best = None
    for leader in policies(n):
        br = None
        for follower in policies(n):
            vl, vf = rollout(game, leader, follower)
            if br is None or vf > br[2] or (vf == br[2] and vl > br[1]):
                br = (follower, vl, vf)
        if best is None or br[1] > best[1]:
            best = (leader, br[1], br[2], br[0])
    return best


def letters(p):
    return "".join("CD"[a] for a in p)


def main():
    lines = []
    for game in GAMES:
        leader, vl, vf, follower = solve(game)
        lines.append(f"{game[0]}\t{letters(leader)}\t{letters(follower)}\t{vl}\t{vf}")
    text = "\n".join(lines) + "\n"
    if len(sys.argv) > 1:
        with open(sys.argv[1], "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
