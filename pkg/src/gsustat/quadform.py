"""Tail probabilities of weighted sums of chi-square variables.

Three routes to P(sum_k c_k chi2_1k > q):

* :func:`davies_pvalue` — numerical inversion of the characteristic
  function with explicit truncation and discretization error control
  (Davies' qf algorithm, ported here in full generality: degrees of
  freedom, non-centralities, and an optional Gaussian term).
* :func:`liu_pvalue` — four-cumulant match to a (non-central) chi-square
  surrogate; fast, no error bound.
* :func:`saddlepoint_pvalue` — Lugannani-Rice tail approximation on the
  cumulant generating function; excellent in deep tails.

Coefficients may be mixed-sign in all three.
"""

import numpy as np
import scipy.optimize
import scipy.stats

from .exceptions import NumericalFailure

_PI = np.pi
_LOG28 = 0.0866  # log(2) / 8, switch point in the convergence-factor bound


class _QfcFault(Exception):
    def __init__(self, ifault):
        self.ifault = ifault
        super().__init__(f"qfc fault {ifault}")


def _exp1(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < -50.0, 0.0, np.exp(np.maximum(x, -708.0)))


def _log1(x, first):
    """log(1+x), or log(1+x)-x, accurate near zero (vectorized)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    big = np.abs(x) > 0.1
    xb = x[big]
    out[big] = np.log1p(xb) if first else np.log1p(xb) - xb
    xs = x[~big]
    y = xs / (2.0 + xs)
    term = 2.0 * y * y * y
    s = (2.0 * y) if first else (-xs * y)
    y2 = y * y
    k = 3.0
    for _ in range(8):
        s = s + term / k
        k += 2.0
        term = term * y2
    out[~big] = s
    return out


class _Qfc:
    """State for one distribution-function evaluation.

    Mirrors the published algorithm: a truncation point for the inversion
    integral is located first, convergence factors are added when they
    shorten the integration, and an auxiliary coarse integration handles
    slowly decaying integrands.
    """

    def __init__(self, lb, nc, df, sigma, c, lim, acc):
        self.lb = np.asarray(lb, dtype=float)
        self.nc = np.asarray(nc, dtype=float)
        self.df = np.asarray(df, dtype=float)
        self.sigma = float(sigma)
        self.c = float(c)
        self.lim = int(lim)
        self.acc = float(acc)
        self.count = 0
        self.intl = 0.0
        self.ersm = 0.0
        self.fail = False
        self.sigsq = sigma * sigma
        self.trace = np.zeros(7)
        self._th = None

    def _counter(self):
        self.count += 1
        if self.count > self.lim:
            raise _QfcFault(4)

    def _errbd(self, u):
        """Tail bound from the mgf at u; returns (bound, cutoff point)."""
        self._counter()
        xconst = u * self.sigsq
        sum1 = u * xconst
        u2 = 2.0 * u
        x = u2 * self.lb
        y = 1.0 - x
        xconst += np.sum(self.lb * (self.nc / y + self.df) / y)
        sum1 += np.sum(
            self.nc * np.square(x / y)
            + self.df * (np.square(x) / y + _log1(-x, False))
        )
        return float(_exp1(-0.5 * sum1)), float(xconst)

    def _ctff(self, accx, upn):
        """Cutoff with tail probability below accx; returns (cutoff, new upn)."""
        u2 = upn
        u1 = 0.0
        c1 = self.mean
        rb = 2.0 * (self.lmax if u2 > 0.0 else self.lmin)
        u = u2 / (1.0 + u2 * rb)
        bound, c2 = self._errbd(u)
        while bound > accx:
            u1 = u2
            c1 = c2
            u2 = 2.0 * u2
            u = u2 / (1.0 + u2 * rb)
            bound, c2 = self._errbd(u)
        while (c1 - self.mean) / (c2 - self.mean) < 0.9:
            u = 0.5 * (u1 + u2)
            bound, xconst = self._errbd(u / (1.0 + u * rb))
            if bound > accx:
                u1 = u
                c1 = xconst
            else:
                u2 = u
                c2 = xconst
        return c2, u2

    def _truncation(self, u, tausq):
        """Bound on the integration error from truncating at u."""
        self._counter()
        sum2 = (self.sigsq + tausq) * u * u
        prod1 = 2.0 * sum2
        u2 = 2.0 * u
        x = np.square(u2 * self.lb)
        sum1 = 0.5 * np.sum(self.nc * x / (1.0 + x))
        big = x > 1.0
        prod2 = float(np.sum(self.df[big] * np.log(x[big])))
        prod3 = float(np.sum(self.df[big] * _log1(x[big], True)))
        s = float(np.sum(self.df[big]))
        prod1 += float(np.sum(self.df[~big] * _log1(x[~big], True)))
        prod2 += prod1
        prod3 += prod1
        x1 = float(_exp1(-sum1 - 0.25 * prod2)) / _PI
        y1 = float(_exp1(-sum1 - 0.25 * prod3)) / _PI
        err1 = 1.0 if s == 0 else x1 * 2.0 / s
        err2 = 2.5 * y1 if prod3 > 1.0 else 1.0
        if err2 < err1:
            err1 = err2
        x2 = 0.5 * sum2
        err2 = 1.0 if x2 <= y1 else y1 / x2
        return err1 if err1 < err2 else err2

    def _findu(self, utx, accx):
        """Smallest truncation point (within a factor grid) meeting accx."""
        divis = (2.0, 1.4, 1.2, 1.1)
        ut = utx
        u = 0.25 * ut
        if self._truncation(u, 0.0) > accx:
            u = ut
            while self._truncation(u, 0.0) > accx:
                ut *= 4.0
                u = ut
        else:
            ut = u
            u = 0.25 * u
            while self._truncation(u, 0.0) <= accx:
                ut = u
                u = 0.25 * u
        for d in divis:
            u = ut / d
            if self._truncation(u, 0.0) <= accx:
                ut = u
        return ut

    def _integrate(self, nterm, interv, tausq, mainx):
        """Accumulate nterm+1 inversion terms at spacing interv."""
        inpi = interv / _PI
        ks = np.arange(nterm + 1)
        chunk = max(1, (1 << 21) // max(1, self.lb.size))
        all_nc_zero = not np.any(self.nc)
        for start in range(0, ks.size, chunk):
            u = (ks[start:start + chunk] + 0.5) * interv
            x = 2.0 * np.outer(u, self.lb)
            y = np.square(x)
            sum3 = -0.5 * self.sigsq * np.square(u) - 0.25 * (
                _log1(y, True) @ self.df
            )
            z = np.arctan(x) * self.df
            if not all_nc_zero:
                yy = self.nc * x / (1.0 + y)
                z = z + yy
                sum3 = sum3 - 0.5 * np.sum(x * yy, axis=1)
            sum1 = -2.0 * u * self.c + np.sum(z, axis=1)
            sum2 = np.abs(-2.0 * u * self.c) + np.sum(np.abs(z), axis=1)
            fac = inpi * _exp1(sum3) / u
            if not mainx:
                fac = fac * (1.0 - _exp1(-0.5 * tausq * np.square(u)))
            self.intl += float(np.sum(np.sin(0.5 * sum1) * fac))
            self.ersm += float(np.sum(0.5 * sum2 * fac))

    def _cfe(self, x):
        """Coefficient of tausq in the convergence-factor error at x."""
        self._counter()
        if self._th is None:
            self._th = np.argsort(np.abs(self.lb), kind="stable")
        th = self._th
        axl0 = abs(x)
        sxl = 1.0 if x > 0.0 else -1.0

        lb_o = self.lb[th]
        nnc_o = (self.df + self.nc)[th]
        same = lb_o * sxl > 0.0
        lj = np.abs(lb_o)
        d = np.where(same, lj * nnc_o, 0.0)

        # walk from the largest |coefficient| down
        rev = slice(None, None, -1)
        d_r = d[rev]
        lj_r = lj[rev]
        same_r = same[rev]
        before = axl0 - (np.cumsum(d_r) - d_r)
        axl1 = before - d_r
        axl2 = lj_r / _LOG28
        stop = same_r & (axl1 <= axl2)
        sum1 = 0.0
        if np.any(stop):
            j = int(np.argmax(stop))
            axl = before[j]
            if axl > axl2[j]:
                axl = axl2[j]
            sum1 = (axl - axl1[j]) / lj_r[j]
            # all remaining (smaller) terms contribute df + nc
            r = self.lb.size
            sum1 += float(np.sum(nnc_o[: r - 1 - j]))
        else:
            axl = axl0 - float(np.sum(d_r))
        if sum1 > 100.0:
            self.fail = True
            return 1.0
        return 2.0 ** (sum1 / 4.0) / (_PI * axl * axl)

    def run(self):
        """Return (P(Q < c), ifault)."""
        acc1 = self.acc
        xlim = float(self.lim)
        ifault = 0

        if np.any(self.df < 0) or np.any(self.nc < 0):
            return -1.0, 3
        sd = self.sigsq + float(
            np.sum(np.square(self.lb) * (2.0 * self.df + 4.0 * self.nc))
        )
        self.mean = float(np.sum(self.lb * (self.df + self.nc)))
        self.lmax = max(0.0, float(self.lb.max(initial=0.0)))
        self.lmin = min(0.0, float(self.lb.min(initial=0.0)))
        if sd == 0.0:
            return (1.0 if self.c > 0.0 else 0.0), 0
        if self.lmin == 0.0 and self.lmax == 0.0 and self.sigma == 0.0:
            return -1.0, 3
        sd = np.sqrt(sd)
        almx = max(self.lmax, -self.lmin)

        utx = 16.0 / sd
        up = 4.5 / sd
        un = -up
        try:
            utx = self._findu(utx, 0.5 * acc1)
            if self.c != 0.0 and almx > 0.07 * sd:
                tausq = 0.25 * acc1 / self._cfe(self.c)
                if self.fail:
                    self.fail = False
                elif self._truncation(utx, tausq) < 0.2 * acc1:
                    self.sigsq += tausq
                    utx = self._findu(utx, 0.25 * acc1)
                    self.trace[5] = np.sqrt(tausq)
            self.trace[4] = utx
            acc1 *= 0.5

            while True:
                cut, up = self._ctff(acc1, up)
                d1 = cut - self.c
                if d1 < 0.0:
                    return 1.0, ifault
                cut, un = self._ctff(acc1, un)
                d2 = self.c - cut
                if d2 < 0.0:
                    return 0.0, ifault
                intv = 2.0 * _PI / max(d1, d2)
                xnt = utx / intv
                xntm = 3.0 / np.sqrt(acc1)
                if xnt <= xntm * 1.5:
                    break
                if xntm > xlim:
                    return -1.0, 1
                ntm = int(np.floor(xntm + 0.5))
                intv1 = utx / ntm
                x = 2.0 * _PI / intv1
                if x <= abs(self.c):
                    break
                tausq = 0.33 * acc1 / (1.1 * (self._cfe(self.c - x)
                                              + self._cfe(self.c + x)))
                if self.fail:
                    break
                acc1 *= 0.67
                self._integrate(ntm, intv1, tausq, False)
                xlim -= xntm
                self.sigsq += tausq
                self.trace[2] += 1
                self.trace[1] += ntm + 1
                utx = self._findu(utx, 0.25 * acc1)
                acc1 *= 0.75

            self.trace[3] = intv
            if xnt > xlim:
                return -1.0, 1
            nt = int(np.floor(xnt + 0.5))
            self._integrate(nt, intv, 0.0, True)
            self.trace[2] += 1
            self.trace[1] += nt + 1
            qfval = 0.5 - self.intl
            self.trace[0] = self.ersm

            # flag possibly significant round-off (radix 8/16 machines)
            upv = self.ersm
            x = upv + self.acc / 10.0
            for rat in (1.0, 2.0, 4.0, 8.0):
                if rat * x == rat * upv:
                    ifault = 2
            return qfval, ifault
        except _QfcFault as fault:
            return -1.0, fault.ifault


def qfc(lb, nc=None, df=None, sigma=0.0, c=0.0, lim=10**6, acc=1e-9):
    """Distribution function P(Q < c) of Q = sum lb_j chi2(df_j, nc_j) + sigma Z.

    Returns (value, ifault, trace); value is -1.0 when a fault prevented
    evaluation.  Fault codes: 1 accuracy not achieved, 2 round-off possibly
    significant, 3 invalid parameters, 4 unable to locate integration
    parameters.
    """
    lb = np.atleast_1d(np.asarray(lb, dtype=float))
    if nc is None:
        nc = np.zeros_like(lb)
    if df is None:
        df = np.ones_like(lb)
    state = _Qfc(lb, np.atleast_1d(nc), np.atleast_1d(df), sigma, c, lim, acc)
    value, ifault = state.run()
    state.trace[6] = state.count
    return value, ifault, state.trace


def _single_tail(c, q):
    """Exact tail of one scaled chi-square, P(c chi2_1 > q)."""
    if c > 0:
        return float(scipy.stats.chi2.sf(q / c, 1))
    return float(scipy.stats.chi2.cdf(q / c, 1))


def davies_pvalue(coeffs, q, acc=1e-9, lim=10**6, max_terms=None):
    """Tail probability P(sum c_k chi2_1 > q) by characteristic-function inversion.

    The result is within ``acc`` of the exact tail.  A single coefficient is
    a plain chi-square and is evaluated exactly (the inversion integral
    decays too slowly there for term-limited integration near q = 0).

    ``max_terms`` caps the number of chi-square terms handed to the
    inversion: the smallest-magnitude remainder is absorbed as a Gaussian
    with the matching mean and variance.  That approximation is accurate
    when the remainder is a long tail of small coefficients (the intended
    use: spectra of large similarity matrices) but it voids the ``acc``
    guarantee, so it is off by default.

    Raises :class:`NumericalFailure` when the inversion reports a fault even
    after widening the term limit.
    """
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if coeffs.size == 0 or not np.any(coeffs):
        raise ValueError("coefficients must be non-empty and not all zero")
    if coeffs.size == 1:
        return _single_tail(coeffs[0], q)
    sigma = 0.0
    if max_terms is not None and coeffs.size > max_terms:
        split = np.argpartition(np.abs(coeffs), coeffs.size - max_terms)
        head = coeffs[split[coeffs.size - max_terms:]]
        tail = coeffs[split[:coeffs.size - max_terms]]
        q = q - float(np.sum(tail))
        sigma = float(np.sqrt(2.0 * np.sum(tail * tail)))
        coeffs = head
    value, ifault, _ = qfc(coeffs, sigma=sigma, c=q, lim=lim, acc=acc)
    if ifault == 1:
        value, ifault, _ = qfc(coeffs, sigma=sigma, c=q, lim=8 * lim, acc=acc)
    if ifault not in (0, 2) or value < -0.5:
        raise NumericalFailure(f"quadratic-form inversion fault {ifault}")
    return float(np.clip(1.0 - value, 0.0, 1.0))


def _liu_params(coeffs):
    c1 = float(np.sum(coeffs))
    c2 = float(np.sum(coeffs**2))
    c3 = float(np.sum(coeffs**3))
    c4 = float(np.sum(coeffs**4))
    return c1, c2, c3, c4


def liu_pvalue(coeffs, q):
    """Moment-matched chi-square surrogate tail for P(sum c_k chi2_1 > q).

    Matches the first four cumulants to a shifted (non-central) chi-square.
    Exact for a single coefficient and for equal coefficients; approximate
    otherwise, with no error bound.  Sets with negative skewness are handled
    by reflecting the coefficient signs; symmetric sets fall back to the
    matched normal.
    """
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if coeffs.size == 0 or not np.any(coeffs):
        raise ValueError("coefficients must be non-empty and not all zero")
    c1, c2, c3, c4 = _liu_params(coeffs)
    s1 = c3 / c2**1.5
    s2 = c4 / c2**2
    mu_q = c1
    sigma_q = np.sqrt(2.0 * c2)
    if abs(s1) < 1e-12:
        return float(scipy.stats.norm.sf((q - mu_q) / sigma_q))
    if s1 < 0.0:
        return float(1.0 - liu_pvalue(-coeffs, -q))
    if s1 * s1 > s2:
        a = 1.0 / (s1 - np.sqrt(s1 * s1 - s2))
        delta = s1 * a**3 - a * a
        df = a * a - 2.0 * delta
    else:
        a = 1.0 / s1
        delta = 0.0
        df = c2**3 / (c3 * c3)
    mu_x = df + delta
    sigma_x = np.sqrt(2.0) * a
    x = (q - mu_q) / sigma_q * sigma_x + mu_x
    if delta > 0.0:
        return float(scipy.stats.ncx2.sf(x, df, delta))
    return float(scipy.stats.chi2.sf(x, df))


def _cgf(t, coeffs):
    return -0.5 * float(np.sum(np.log1p(-2.0 * t * coeffs)))


def _cgf_d1(t, coeffs):
    return float(np.sum(coeffs / (1.0 - 2.0 * t * coeffs)))


def _cgf_d2(t, coeffs):
    return 2.0 * float(np.sum(np.square(coeffs / (1.0 - 2.0 * t * coeffs))))


def saddlepoint_pvalue(coeffs, q):
    """Lugannani-Rice tail approximation for P(sum c_k chi2_1 > q).

    The saddlepoint solves K'(t) = q inside the convergence strip of the
    cumulant generating function.  At the distribution mean the formula has
    a removable singularity; the analytic limit is used there.  A single
    coefficient is evaluated exactly.
    """
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if coeffs.size == 0 or not np.any(coeffs):
        raise ValueError("coefficients must be non-empty and not all zero")
    if coeffs.size == 1:
        return _single_tail(coeffs[0], q)
    scale = float(np.abs(coeffs).max())
    lb = coeffs / scale
    x = q / scale

    pos = lb[lb > 0]
    neg = lb[lb < 0]
    if neg.size == 0 and x <= 0.0:
        return 1.0
    if pos.size == 0 and x >= 0.0:
        return 0.0

    tmax = 1.0 / (2.0 * pos.max()) if pos.size else np.inf
    tmin = 1.0 / (2.0 * neg.min()) if neg.size else -np.inf

    def f(t):
        return _cgf_d1(t, lb) - x

    mean = float(np.sum(lb))
    if f(0.0) == 0.0:
        t_hat = 0.0
    else:
        # K' is strictly increasing on (tmin, tmax), so one sign change
        # brackets the root; edge points back off the poles as needed.
        if x > mean:
            lo = 0.0
            if np.isfinite(tmax):
                eps = 1e-12
                hi = tmax * (1.0 - eps)
                while f(hi) < 0.0 and eps > 1e-280:
                    eps *= 1e-3
                    hi = tmax * (1.0 - eps)
                if f(hi) < 0.0:
                    raise NumericalFailure("saddlepoint bracket not found")
            else:
                hi = 1.0
                for _ in range(200):
                    if f(hi) > 0.0:
                        break
                    hi *= 2.0
                else:
                    raise NumericalFailure("saddlepoint bracket not found")
        else:
            hi = 0.0
            if np.isfinite(tmin):
                eps = 1e-12
                lo = tmin * (1.0 - eps)
                while f(lo) > 0.0 and eps > 1e-280:
                    eps *= 1e-3
                    lo = tmin * (1.0 - eps)
                if f(lo) > 0.0:
                    raise NumericalFailure("saddlepoint bracket not found")
            else:
                lo = -1.0
                for _ in range(200):
                    if f(lo) < 0.0:
                        break
                    lo *= 2.0
                else:
                    raise NumericalFailure("saddlepoint bracket not found")
        try:
            t_hat = scipy.optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-15,
                                          maxiter=500)
        except (RuntimeError, ValueError) as exc:
            raise NumericalFailure(f"saddlepoint root finding failed: {exc}")

    k2 = _cgf_d2(t_hat, lb)
    w_sq = 2.0 * (t_hat * x - _cgf(t_hat, lb))
    w = np.sign(t_hat) * np.sqrt(max(w_sq, 0.0))
    v = t_hat * np.sqrt(k2)
    if abs(w) < 1e-4:
        # removable singularity at the mean: 1/2 - K'''(0) / (6 sqrt(2 pi) K''(0)^1.5)
        kappa2 = 2.0 * float(np.sum(lb**2))
        kappa3 = 8.0 * float(np.sum(lb**3))
        return float(np.clip(0.5 - kappa3 / (6.0 * np.sqrt(2.0 * _PI)
                                             * kappa2**1.5), 0.0, 1.0))
    p = scipy.stats.norm.sf(w) + scipy.stats.norm.pdf(w) * (1.0 / v - 1.0 / w)
    return float(np.clip(p, 0.0, 1.0))
