import ast as __semiforge_ast
import sys as __semiforge_sys

{{user_code}}


def __semiforge_main():
    args = __semiforge_ast.literal_eval({{args_literal}})
    if not isinstance(args, tuple):
        args = (args,)
    result = globals()[{{function_name}}](*args)
    if result is not None:
        __semiforge_sys.stdout.write(repr(result))
    __semiforge_sys.stdout.flush()


__semiforge_main()
