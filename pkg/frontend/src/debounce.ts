export interface Debounced<A extends unknown[]> {
  call: (...args: A) => void;
  flush: () => void;
  dispose: () => void;
}

/** Trailing-edge debounce; the last call's arguments win. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  delayMs = 150,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let pending: A | null = null;
  const fire = () => {
    timer = null;
    if (pending) {
      const args = pending;
      pending = null;
      fn(...args);
    }
  };
  return {
    call: (...args: A) => {
      pending = args;
      if (timer) clearTimeout(timer);
      timer = setTimeout(fire, delayMs);
    },
    flush: () => {
      if (timer) {
        clearTimeout(timer);
        fire();
      }
    },
    dispose: () => {
      if (timer) clearTimeout(timer);
      timer = null;
      pending = null;
    },
  };
}
