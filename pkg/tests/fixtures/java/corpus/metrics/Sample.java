package metrics;

public class Sample {
    private static int counter;
    private String name;
    private int count;

    public Sample(String name, int count) {
        this.name = name;
        this.count = count;
    }

    public String getName() {
        return name;
    }

    public void setName(String name) {
        this.name = name;
    }

    public void reset() {
    }

    public int answer() {
        return 42;
    }

    public String greeting() {
        return "hello";
    }

    public Integer boxedCount() {
        return Integer.valueOf(count);
    }

    public static int getCounter() {
        return counter;
    }

    public int peek(Sample other) {
        return other.count;
    }

    public void setCountPlusOne(int c) {
        this.count = c + 1;
    }

    public int abs(int x) {
        if (x < 0) {
            return -x;
        }
        return x;
    }

    public int max3(int a, int b, int c) {
        if (a > b) {
            if (a > c) {
                return a;
            }
            return c;
        }
        if (b > c) {
            return b;
        }
        return c;
    }

    public int sumTo(int n) {
        int s = 0;
        for (int i = 0; i < n; i++) {
            s += i;
        }
        return s;
    }

    public int countDown(int n) {
        int steps = 0;
        while (n > 0) {
            n--;
            steps++;
        }
        return steps;
    }

    public String dayKind(int d) {
        switch (d) {
            case 1:
                return "start";
            case 2:
                return "middle";
            case 3:
                return "end";
            default:
                return "none";
        }
    }

    public int grouped(int d) {
        switch (d) {
            case 1:
            case 2:
                return 10;
            case 3:
                return 30;
            default:
                return 0;
        }
    }

    public int sparse(int d) {
        switch (d) {
            case 10:
                return 1;
            case 1000:
                return 2;
            case 100000:
                return 3;
            default:
                return 0;
        }
    }

    public boolean inRange(int x, int lo, int hi) {
        return x >= lo && x <= hi;
    }

    public boolean outside(int x, int lo, int hi) {
        return x < lo || x > hi;
    }

    public int clamp(int x) {
        return x > 100 ? 100 : x;
    }

    public int parseOr(String s, int fallback) {
        try {
            return Integer.parseInt(s);
        } catch (NumberFormatException e) {
            if (s == null) {
                return -1;
            }
            return fallback;
        }
    }

    public int digits(int n) {
        int d = 0;
        do {
            n = n / 10;
            d++;
        } while (n != 0);
        return d;
    }

    public int firstNegative(int[] xs) {
        int idx = -1;
        for (int i = 0; i < xs.length; i++) {
            for (int j = 0; j < 1; j++) {
                if (xs[i] < 0) {
                    idx = i;
                    break;
                }
            }
            if (idx >= 0) {
                break;
            }
        }
        return idx;
    }

    public boolean isEmpty() {
        return count == 0;
    }

    public void fail() {
        throw new IllegalStateException("fail");
    }

    public void increment() {
        count++;
    }
}
