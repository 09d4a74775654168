from typing import Any, Callable, Iterator, Sequence, Union

import jax
import jax.numpy as jnp
import numpy as np

from .custom_types import PyTree


_sentinel = object()

_Node = Any


def tree_at(
    where: Callable[[PyTree], Union[_Node, Sequence[_Node]]],
    pytree: PyTree,
    replace: Union[_Node, Sequence[_Node]] = _sentinel,
    replace_fn: Callable[[_Node], _Node] = _sentinel,
    is_leaf: Callable[[_Node], bool] = None,
) -> PyTree:
    """Updates a PyTree out-of-place. Unlike a leaf-only update, `where` may select
    whole subtrees, e.g. a single statement deep inside a program.

    **Arguments:**

    - `where`: A callable `PyTree -> Node` or `PyTree -> Sequence[Node]`. It is called
        on `pytree` itself and should return the node or nodes to replace. For example
        `where = lambda prog: prog.procedures[0].body.second`.
    - `pytree`: The PyTree to modify.
    - `replace`: Either a single element, or a sequence of the same length as returned
        by `where`. Mutually exclusive with `replace_fn`.
    - `replace_fn`: A function `Node -> Any`, called on every node selected by `where`.
        Mutually exclusive with `replace`.
    - `is_leaf`: As `jax.tree_util.tree_flatten`; used to determine what else should
        be treated as a leaf.

    **Returns:**

    A copy of the input PyTree, with the appropriate modifications.

    Nodes are matched by identity, so a node object that occurs several times in
    `pytree` is replaced at every occurrence.

    !!! example

        ```python
        prog = smrtype.tree_at(
            lambda p: p.procedures[0].body, prog, replace=Com(Skip())
        )
        ```
    """

    if (replace is _sentinel and replace_fn is _sentinel) or (
        replace is not _sentinel and replace_fn is not _sentinel
    ):
        raise ValueError(
            "Precisely one of `replace` and `replace_fn` must be specified."
        )

    nodes = where(pytree)
    if isinstance(nodes, (list, tuple)) and not _is_pytree_node_class(nodes):
        nodes = tuple(nodes)
        if replace is not _sentinel:
            if not isinstance(replace, (list, tuple)):
                raise TypeError("`replace` must be a sequence when `where` is.")
            if len(replace) != len(nodes):
                raise ValueError(
                    "`where` must return a sequence of nodes of the same length as "
                    "`replace`."
                )
    else:
        nodes = (nodes,)
        if replace is not _sentinel:
            replace = (replace,)

    targets = {id(node): j for j, node in enumerate(nodes)}

    def _is_target(x):
        if id(x) in targets:
            return True
        return is_leaf is not None and is_leaf(x)

    flat, treedef = jax.tree_util.tree_flatten(pytree, is_leaf=_is_target)
    found = set()
    for i, elem in enumerate(flat):
        try:
            j = targets[id(elem)]
        except KeyError:
            continue
        found.add(j)
        flat[i] = replace_fn(elem) if replace is _sentinel else replace[j]
    if len(found) != len(nodes):
        raise ValueError("`where` returned a node that is not part of `pytree`.")
    return jax.tree_util.tree_unflatten(treedef, flat)


def _is_pytree_node_class(x):
    # tuples returned by `where` are sequences of nodes; Modules are single nodes
    return hasattr(type(x), "tree_flatten")


def tree_equal(*pytrees: PyTree) -> bool:
    """Returns `True` if all input PyTrees are equal. Every PyTree must have the same
    structure (including static fields). Any JAX or NumPy arrays (as leaves) must
    have the same shape, dtype, and values to be considered equal.

    **Arguments:**

    - `*pytrees`: Any number of PyTrees each with any structure.

    **Returns:**

    A boolean.
    """
    flat, treedef = jax.tree_util.tree_flatten(pytrees[0])
    array_types = (jnp.ndarray, np.ndarray)
    for pytree in pytrees[1:]:
        flat_, treedef_ = jax.tree_util.tree_flatten(pytree)
        if treedef_ != treedef:
            return False
        for elem, elem_ in zip(flat, flat_):
            if isinstance(elem, array_types):
                if isinstance(elem_, array_types):
                    if (
                        (type(elem) != type(elem_))
                        or (elem.shape != elem_.shape)
                        or (elem.dtype != elem_.dtype)
                        or (elem != elem_).any()
                    ):
                        return False
                else:
                    return False
            else:
                if isinstance(elem_, array_types):
                    return False
                if type(elem) is not type(elem_) or elem != elem_:
                    return False
    return True


def tree_nodes(pytree: PyTree, is_node: Callable[[Any], bool]) -> Iterator[Any]:
    """Yields every node of `pytree` (internal nodes included, in pre-order) for which
    `is_node` returns `True`.
    """
    stack = [pytree]
    while stack:
        x = stack.pop()
        if is_node(x):
            yield x
        children = jax.tree_util.tree_flatten(x, is_leaf=lambda y: y is not x)[0]
        if len(children) == 1 and children[0] is x:
            continue
        stack.extend(reversed(children))


def tree_size(pytree: PyTree, is_node: Callable[[Any], bool]) -> int:
    """Number of nodes of `pytree` satisfying `is_node`."""
    return sum(1 for _ in tree_nodes(pytree, is_node))
