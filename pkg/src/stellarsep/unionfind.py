"""Minimal union-find with path compression."""


class UnionFind:
    def __init__(self, size):
        self.parent = list(range(size))
        self.count = size

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while x != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        self.count -= 1
        return True

    def groups(self):
        """Members per root, ordered by smallest member."""
        out = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return [sorted(v) for _, v in sorted(out.items())]
