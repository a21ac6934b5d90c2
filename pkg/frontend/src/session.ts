// Token handling: the bearer token lives in sessionStorage only, so closing
// the tab forgets it and it never reaches localStorage or the URL.

const TOKEN_KEY = "gridforge.token";

export function storedToken(): string | null {
  try {
    return window.sessionStorage.getItem(TOKEN_KEY);
  } catch {
    return null;
  }
}

export function storeToken(token: string): void {
  window.sessionStorage.setItem(TOKEN_KEY, token);
}

export function clearToken(): void {
  window.sessionStorage.removeItem(TOKEN_KEY);
}
