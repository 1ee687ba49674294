"""Writes the 30-problem APPS-style mini corpus and its canned completions.

Outputs (next to this script):
  apps/<problem>/{question.txt,solutions.json[,metadata.json]}
  completions.jsonl   {"code": <original solution>, "completion": <LLM text>}

Replay files are then produced with
  cargo run -p semiforge --example record_replay
"""

import json
import os
import shutil

HERE = os.path.dirname(os.path.abspath(__file__))


def completion(instruction, refined, answer, inputs, drop=None):
    parts = {
        "Instruction": instruction,
        "Refined Code": "```python\n" + refined.strip("\n") + "\n```",
        "Answer Type": answer,
        "Test Case Inputs": "\n".join("#### Input\n" + i for i in inputs),
    }
    out = []
    for name, body in parts.items():
        if name == drop:
            continue
        out.append("### " + name + "\n" + body + "\n")
    return "\n".join(out)


def call(fn):
    return "Call-Based\nFunction Name: " + fn


STDIN = "Standard Input"

# (id, description, [(original, completion)], metadata)
problems = []


def add(pid, desc, sols, special=False):
    problems.append((pid, desc, sols, special))


add("p01", "Given an integer n, print 2n.", [
    ("print(int(input())*2)",
     completion("Read an integer from standard input and print twice its value.",
                "value = int(input())\nprint(value * 2)", STDIN,
                ["3", "7", "x", "10", "-2", "0", "abc", "5"])),
    ("n=int(input())\nprint(n+n)",
     completion("Double the number given on the only input line.",
                "number = int(input())\nprint(number + number)", STDIN,
                ["1", "2", "3", "4", "5", "6", "7", "8"])),
])

add("p02", "Sum the n numbers on the second line.", [
    ("n=int(input())\nprint(sum(map(int,input().split()[:n])))",
     completion("The first line contains n and the second line n integers; output their total.",
                "count = int(input())\nvalues = list(map(int, input().split()))[:count]\nprint(sum(values))",
                STDIN,
                ["3\n1 2 3", "1\n5", "2\n-1 1", "0\n", "4\n1 1 1 1", "x\n1", "2\n10 20", "3\n0 0 0"])),
])

add("p03", "Reverse the given string.", [
    ("print(input()[::-1])",
     completion("Print the input line reversed character by character.",
                "line = input()\nprint(line[::-1])", STDIN,
                ["abc", "racecar", "hello world", "a", "xy", "12345", "Ab", "zz"])),
])

add("p04", "Return a+b.", [
    ("def add(a,b):\n  return a+b",
     completion("Write a function add(a, b) returning the sum of two numbers.",
                "def add(a, b):\n    return a + b", call("add"),
                ["(1, 2)", "(0, 0)", "(-5, 5)", "(100, 23)", "('a', 1)", "(2.5, 0.5)", "(7, 8)", "(1,)"])),
])

# malformed completion: no Refined Code section
add("p05", "Compute n factorial.", [
    ("def fact(n):\n  r=1\n  for i in range(2,n+1): r*=i\n  return r",
     completion("Write fact(n) that returns n factorial.", "", call("fact"),
                ["(0,)", "(5,)"], drop="Refined Code")),
])

# refined code is an off-by-one mutant
add("p06", "Is n prime?", [
    ("def is_prime(n):\n  if n<2: return False\n  i=2\n  while i*i<=n:\n    if n%i==0: return False\n    i+=1\n  return True",
     completion("Implement is_prime(n) that reports whether n is a prime number.",
                "def is_prime(n):\n    if n < 2:\n        return False\n    d = 2\n    while d * d < n:\n        if n % d == 0:\n            return False\n        d += 1\n    return True",
                call("is_prime"),
                ["(2,)", "(9,)", "(17,)", "(1,)", "(25,)", "(97,)", "(49,)", "(4,)"])),
])

add("p07", "Print the maximum of the list.", [
    ("input()\nprint(max(map(int,input().split())))",
     completion("Given a count on the first line and that many integers on the second, print the largest integer.",
                "input()\nnumbers = [int(tok) for tok in input().split()]\nprint(max(numbers))", STDIN,
                ["3\n4 9 2", "1\n-3", "5\n1 2 3 4 5", "2\n7 7", "0\n", "3\n-1 -2 -3", "4\n10 0 10 5", "1\nq"])),
])

add("p08", "Count vowels.", [
    ("def vowels(s):\n  return sum(c in 'aeiou' for c in s)",
     completion("Write vowels(s) that counts how many lowercase vowels appear in s.",
                "def vowels(s):\n    return sum(1 for ch in s if ch in 'aeiou')", call("vowels"),
                ["('hello',)", "('',)", "('aeiou',)", "('xyz',)", "('banana',)", "(5,)", "('queue',)", "('AEIOU',)"])),
])

# call-based without a function name
add("p09", "Fibonacci number.", [
    ("def fib(n):\n  a,b=0,1\n  for _ in range(n): a,b=b,a+b\n  return a",
     completion("Return the n-th Fibonacci number.",
                "def fib(n):\n    a, b = 0, 1\n    for _ in range(n):\n        a, b = b, a + b\n    return a",
                "Call-Based", ["(0,)", "(10,)"])),
])

add("p10", "Print gcd of two numbers.", [
    ("import math\na,b=map(int,input().split())\nprint(math.gcd(a,b))",
     completion("Read two integers on one line and print their greatest common divisor.",
                "from math import gcd\n\nfirst, second = map(int, input().split())\nprint(gcd(first, second))",
                STDIN, ["12 18", "7 5", "0 9", "100 10", "1", "a b", "48 36", "17 17"])),
])

add("p11", "Palindrome check.", [
    ("s=input()\nprint('YES' if s==s[::-1] else 'NO')",
     completion("Print YES when the input line reads the same backwards, otherwise NO.",
                "text = input()\nprint('YES' if text == text[::-1] else 'NO')", STDIN,
                ["abba", "abc", "a", "racecar", "ab", "noon", "xyzzyx", "top"])),
])

# every generated input crashes the original
add("p12", "Sort the numbers.", [
    ("print(*sorted(map(int,input().split())))",
     completion("Sort integers given on one line in ascending order and print them space separated.",
                "values = sorted(int(tok) for tok in input().split())\nprint(*values)", STDIN,
                ["three one two", "a b", "x", "1.5 2", "one", "?", "b a", "c"])),
])

add("p13", "Digit sum.", [
    ("def digit_sum(n):\n  return sum(int(d) for d in str(n))",
     completion("Write digit_sum(n) returning the sum of the decimal digits of a non-negative integer n.",
                "def digit_sum(n):\n    total = 0\n    while n:\n        total += n % 10\n        n //= 10\n    return total",
                call("digit_sum"),
                ["(0,)", "(123,)", "(9999,)", "(10,)", "(5,)", "(-12,)", "(1000001,)", "(42,)"])),
])

# refined code flips a comparison
add("p14", "Clamp a value.", [
    ("def clamp(x, lo, hi):\n  return max(lo, min(hi, x))",
     completion("Write clamp(x, lo, hi) that limits x to the closed interval [lo, hi].",
                "def clamp(x, lo, hi):\n    if x > hi:\n        return lo\n    if x < lo:\n        return lo\n    return x",
                call("clamp"),
                ["(5, 0, 10)", "(-3, 0, 10)", "(12, 0, 10)", "(0, 0, 0)", "(7, 7, 9)", "(10, 0, 10)", "(3, 1, 2)", "(1, 5, 6)"])),
])

add("p15", "Count words.", [
    ("print(len(input().split()))",
     completion("Print how many whitespace-separated words the input line contains.",
                "words = input().split()\nprint(len(words))", STDIN,
                ["hello world", "one", "a b c d", "  spaced   out  ", "x y", "tok", "1 2 3", "q w e r t"])),
])

add("p16", "Even or odd.", [
    ("n=int(input())\nprint('even' if n%2==0 else 'odd')",
     completion("Read an integer and print even if it is divisible by two, odd otherwise.",
                "n = int(input())\nprint('even' if n % 2 == 0 else 'odd')", STDIN,
                ["4", "7", "0", "-3", "x", "1.5", "", "10"])),
])

add("p17", "Square each element.", [
    ("def squares(xs):\n  return [x*x for x in xs]",
     completion("Write squares(xs) returning a list with the square of each element of xs.",
                "def squares(xs):\n    return [value ** 2 for value in xs]", call("squares"),
                ["([1, 2, 3],)", "([],)", "([-2],)", "([0, 5],)", "(['a'],)", "([10, 10],)", "(None,)", "([3],)"])),
])

add("p18", "Index of minimum.", [
    ("def argmin(xs):\n  return xs.index(min(xs))",
     completion("Write argmin(xs) returning the index of the first smallest element of a non-empty list.",
                "def argmin(xs):\n    best = 0\n    for i, v in enumerate(xs):\n        if v < xs[best]:\n            best = i\n    return best",
                call("argmin"),
                ["([3, 1, 2],)", "([5],)", "([2, 2, 1, 1],)", "([],)", "([-1, -5, 0],)", "([9, 8, 7],)", "([0, 0],)", "(['b', 'a'],)"])),
])

add("p19", "Most frequent character.", [
    ("from collections import Counter\ns=input()\nprint(Counter(s).most_common(1)[0][0])",
     completion("Output the character occurring most often in the input line, choosing the earliest on ties.",
                "from collections import Counter\n\nline = input()\nprint(Counter(line).most_common(1)[0][0])",
                STDIN, ["aab", "abc", "zzzy", "", "mississippi", "q", "aabb", "xyx"])),
])

add("p20", "Binary representation.", [
    ("def to_bin(n):\n  return bin(n)[2:]",
     completion("Write to_bin(n) that converts a non-negative integer into its binary string without a prefix.",
                "def to_bin(n):\n    return format(n, 'b')", call("to_bin"),
                ["(0,)", "(5,)", "(255,)", "(1,)", "('7',)", "(1024,)", "(2.0,)", "(6,)"])),
])

add("p21", "Celsius to Fahrenheit.", [
    ("c=int(input())\nprint(c*9//5+32)",
     completion("Convert an integer Celsius temperature to Fahrenheit using integer arithmetic.",
                "celsius = int(input())\nprint(celsius * 9 // 5 + 32)", STDIN,
                ["0", "100", "-40", "37", "hot", "", "25", "-17"])),
])

add("p22", "Triangle check.", [
    ("a,b,c=sorted(map(int,input().split()))\nprint('YES' if a+b>c else 'NO')",
     completion("Given three side lengths, print YES if they form a non-degenerate triangle and NO otherwise.",
                "a, b, c = sorted(map(int, input().split()))\nprint('YES' if a + b > c else 'NO')", STDIN,
                ["3 4 5", "1 1 2", "2 2 3", "1 2", "5 5 5", "10 1 1", "a b c", "7 10 5"])),
])

add("p23", "Leap year.", [
    ("def leap(y):\n  return y%4==0 and (y%100!=0 or y%400==0)",
     completion("Write leap(y) that tells whether year y is a Gregorian leap year.",
                "def leap(y):\n    if y % 400 == 0:\n        return True\n    if y % 100 == 0:\n        return False\n    return y % 4 == 0",
                call("leap"),
                ["(2000,)", "(1900,)", "(2024,)", "(2023,)", "(1600,)", "(2100,)", "(4,)", "(1,)"])),
])

add("p24", "Uppercase.", [
    ("print(input().upper())",
     completion("Print the input line converted to upper case.",
                "print(input().upper())", STDIN,
                ["abc", "Hello", "123", "mixed Case", "", "x", "ALREADY", "snake_case"])),
])

add("p25", "Prefix sums.", [
    ("def prefix(xs):\n  out=[];s=0\n  for x in xs:\n    s+=x;out.append(s)\n  return out",
     completion("Write prefix(xs) returning the running totals of xs.",
                "from itertools import accumulate\n\n\ndef prefix(xs):\n    return list(accumulate(xs))",
                call("prefix"),
                ["([1, 2, 3],)", "([],)", "([5],)", "([-1, 1, -1],)", "(['a', 'b'],)", "([0, 0, 0],)", "(3,)", "([10, 20],)"])),
])

add("p26", "Distinct values.", [
    ("input()\nprint(len(set(input().split())))",
     completion("Read a count and a line of tokens and print how many distinct tokens appear.",
                "input()\ntokens = input().split()\nprint(len(set(tokens)))", STDIN,
                ["3\na b a", "1\nx", "4\n1 2 3 4", "2\nq q", "0", "5\na a a a a", "3\nx y z", "2\n1 1"])),
])

# special judge: removed at ingest
add("p27", "Print any root of x^2 = n.", [
    ("import math\nprint(math.sqrt(int(input())))",
     completion("Print a square root of n.", "import math\nprint(math.sqrt(int(input())))", STDIN, ["4"])),
], special=True)

# p28/p29 share a description up to whitespace; merged to 27 solutions and capped at 25
SUM_DESC = "Read two integers\nand print their sum."
sum_variants = []
names = ["a", "b", "x", "y", "u", "v", "m", "n", "p", "q", "s", "t", "i", "j", "k"]
for idx in range(27):
    left, right = names[idx % len(names)], names[(idx + 1) % len(names)]
    if idx % 3 == 0:
        code = f"{left},{right}=map(int,input().split())\nprint({left}+{right})  # c{idx}"
    elif idx % 3 == 1:
        code = f"{left} , {right} = [int(z) for z in input().split()]\nprint({right}+{left})  # v{idx}"
    else:
        code = f"print(sum(map(int, input().split()[:2])))  # variant {idx}"
    instr = "Read two integers from one line and print their sum."
    if idx == 1:
        instr = "Compute the total of a pair of whole numbers supplied on standard input, writing the result."
    refined = "first, second = map(int, input().split())\nprint(first + second)"
    if idx % 3 == 2:
        refined = "values = input().split()\nprint(int(values[0]) + int(values[1]))"
    inputs = ["1 2", "10 20", "-5 5", "0 0", "3 4", "x y", "7", "100 1"]
    sum_variants.append((code, completion(instr, refined, STDIN, inputs)))
add("p28", SUM_DESC, sum_variants[:15])
add("p29", "  Read two  integers and print their   sum. ", sum_variants[15:])

long_comment = "# " + " ".join(f"w{i}" for i in range(1000))
add("p30", "Print the length of the input line.", [
    (long_comment + "\nprint(len(input()))",
     completion("Print the length of the line.", "print(len(input()))", STDIN, ["abc"])),
    ("s=input()\nprint(len(s))",
     completion("Output the number of characters in the single input line.",
                "line = input()\nprint(len(line))", STDIN,
                ["abc", "", "hello world", "x", "  ", "1234567890", "tab\there", "end"])),
])


def main():
    apps = os.path.join(HERE, "apps")
    shutil.rmtree(apps, ignore_errors=True)
    completions = []
    for pid, desc, sols, special in problems:
        folder = os.path.join(apps, pid)
        os.makedirs(folder)
        with open(os.path.join(folder, "question.txt"), "w") as f:
            f.write(desc)
        with open(os.path.join(folder, "solutions.json"), "w") as f:
            json.dump([code for code, _ in sols], f, indent=1)
        if special:
            with open(os.path.join(folder, "metadata.json"), "w") as f:
                json.dump({"special_judge": True}, f)
        for code, comp in sols:
            completions.append({"code": code, "completion": comp})
    with open(os.path.join(HERE, "completions.jsonl"), "w") as f:
        for c in completions:
            f.write(json.dumps(c) + "\n")
    print(len(problems), "problems,", len(completions), "completions")


if __name__ == "__main__":
    main()
