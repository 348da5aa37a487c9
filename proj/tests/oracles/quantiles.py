"""Linear-interpolation quantiles (numpy's default 'linear' method)."""
import numpy as np

for col in ([1, 2, 3, 4, 100], [5, 5, 5], [3.5, -1.0, 2.0, 8.0], [0, 0, 0, 1, 7, 7, 9, 12]):
    a = np.array(col, dtype=float)
    q1, med, q3 = np.quantile(a, [0.25, 0.5, 0.75])
    print(col, "q1=%r median=%r q3=%r iqr=%r" % (float(q1), float(med), float(q3), float(q3 - q1)))
