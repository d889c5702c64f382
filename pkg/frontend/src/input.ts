/** Keyboard -> control intent.
 *
 * WASD / arrows steer; held modifiers pick the gait (Shift jog, Space jump,
 * C crouch) and digits 1-5 sticky-select one. With no explicit selection the
 * gait defaults to walking while moving and standing while idle.
 */

export const GAITS = ["standing", "walking", "jogging", "jumping", "crouching"] as const;

export const GAIT_SPEEDS: Record<string, number> = {
  standing: 0.0,
  walking: 1.2,
  jogging: 2.6,
  jumping: 1.8,
  crouching: 0.8,
};

export interface ControlState {
  dirX: number;
  dirZ: number;
  speed: number;
  gait: number;
}

export interface InputState {
  keys: Set<string>;
  stickyGait: number | null; // digit-selected gait id, null = automatic
}

export function newInputState(): InputState {
  return { keys: new Set(), stickyGait: null };
}

/** Feed a keydown; returns true when the key is handled. */
export function handleKeyDown(state: InputState, key: string): boolean {
  const k = normalizeKey(key);
  if (k === null) return false;
  if (k >= "1" && k <= "5") {
    const id = Number(k) - 1;
    state.stickyGait = state.stickyGait === id ? null : id; // toggle off
    return true;
  }
  state.keys.add(k);
  return true;
}

export function handleKeyUp(state: InputState, key: string): boolean {
  const k = normalizeKey(key);
  if (k === null) return false;
  state.keys.delete(k);
  return true;
}

function normalizeKey(key: string): string | null {
  switch (key) {
    case "w": case "W": case "ArrowUp": return "up";
    case "s": case "S": case "ArrowDown": return "down";
    case "a": case "A": case "ArrowLeft": return "left";
    case "d": case "D": case "ArrowRight": return "right";
    case "Shift": return "jog";
    case " ": case "Spacebar": return "jump";
    case "c": case "C": return "crouch";
    case "1": case "2": case "3": case "4": case "5": return key;
    default: return null;
  }
}

export function controlFromInput(state: InputState): ControlState {
  let x = 0;
  let z = 0;
  if (state.keys.has("up")) z += 1;
  if (state.keys.has("down")) z -= 1;
  if (state.keys.has("right")) x += 1;
  if (state.keys.has("left")) x -= 1;
  const moving = x !== 0 || z !== 0;
  if (moving) {
    const norm = Math.hypot(x, z);
    x /= norm;
    z /= norm;
  }
  let gait: number;
  if (state.keys.has("jump")) {
    gait = GAITS.indexOf("jumping"); // direction preserved while airborne
  } else if (state.keys.has("crouch")) {
    gait = GAITS.indexOf("crouching");
  } else if (state.keys.has("jog") && moving) {
    gait = GAITS.indexOf("jogging");
  } else if (state.stickyGait !== null) {
    gait = state.stickyGait;
  } else {
    gait = moving ? GAITS.indexOf("walking") : GAITS.indexOf("standing");
  }
  const speed = moving || gait === GAITS.indexOf("jumping") ? GAIT_SPEEDS[GAITS[gait]] : 0.0;
  return { dirX: x, dirZ: z, speed, gait };
}
